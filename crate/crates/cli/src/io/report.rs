//! Metric report: one `key=value` per line with fixed key names and four
//! decimal places. Mesh and depth sections are emitted when available.

use std::fmt::Write as _;
use std::path::Path;

use mvrecon_core::{DepthMetrics, MeshMetrics};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub mesh: Option<MeshMetrics<f64>>,
    pub depth: Option<DepthMetrics<f64>>,
}

impl MetricReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.mesh {
            let _ = writeln!(out, "acc_cm={:.4}", m.acc_cm);
            let _ = writeln!(out, "comp_cm={:.4}", m.comp_cm);
            let _ = writeln!(out, "cham_cm={:.4}", m.cham_cm);
            let _ = writeln!(out, "prec={:.4}", m.prec);
            let _ = writeln!(out, "recall={:.4}", m.recall);
            let _ = writeln!(out, "f1={:.4}", m.f1);
        }
        if let Some(d) = &self.depth {
            let _ = writeln!(out, "abs_rel={:.4}", d.abs_rel);
            let _ = writeln!(out, "abs_diff_m={:.4}", d.abs_diff_m);
            let _ = writeln!(out, "sq_rel={:.4}", d.sq_rel);
            let _ = writeln!(out, "delta_105={:.4}", d.delta_105);
            let _ = writeln!(out, "delta_125={:.4}", d.delta_125);
            let _ = writeln!(out, "depth_comp={:.4}", d.comp);
        }
        out
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render()).map_err(|e| CliError::input_at(path, e))
    }
}
