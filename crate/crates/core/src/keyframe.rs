//! Keyframe subsampling and overlapping submap windows.

use thiserror::Error;

use crate::camera::Pose;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubmapError {
    #[error("submap window requires n >= 2, got n={0}")]
    WindowTooSmall(usize),
    #[error("submap overlap must satisfy o < n, got n={n} o={o}")]
    OverlapTooLarge { n: usize, o: usize },
    #[error("keyframe sequence is empty")]
    EmptySequence,
    #[error("keyframe thresholds must be positive, got t_max={t_max} r_max={r_max}")]
    InvalidThresholds { t_max: f64, r_max: f64 },
}

/// One subsampled keyframe: its index in the original sequence plus its pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keyframe<S: Real> {
    pub frame_id: usize,
    pub pose: Pose<S>,
}

/// Ordered keyframe subset of the input sequence; `frame_id`s are strictly
/// increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeSequence<S: Real> {
    entries: Vec<Keyframe<S>>,
}

impl<S: Real> KeyframeSequence<S> {
    pub fn new(entries: Vec<Keyframe<S>>) -> Result<Self, SubmapError> {
        if entries.is_empty() {
            return Err(SubmapError::EmptySequence);
        }
        debug_assert!(entries.windows(2).all(|w| w[0].frame_id < w[1].frame_id));
        Ok(Self { entries })
    }

    #[inline]
    pub fn entries(&self) -> &[Keyframe<S>] {
        &self.entries
    }

    /// Number of keyframes P.
    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn pose(&self, position: usize) -> &Pose<S> {
        &self.entries[position].pose
    }

    #[inline]
    pub fn frame_id(&self, position: usize) -> usize {
        self.entries[position].frame_id
    }
}

/// Window length and overlap of consecutive submaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubmapConfig {
    n: usize,
    o: usize,
}

impl SubmapConfig {
    pub fn new(n: usize, o: usize) -> Result<Self, SubmapError> {
        if n < 2 {
            return Err(SubmapError::WindowTooSmall(n));
        }
        if o >= n {
            return Err(SubmapError::OverlapTooLarge { n, o });
        }
        Ok(Self { n, o })
    }

    #[inline]
    pub fn window(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn overlap(&self) -> usize {
        self.o
    }
}

/// A window of consecutive keyframe positions carrying one unknown scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Submap {
    index: usize,
    start: usize,
    end: usize, // exclusive
}

impl Submap {
    /// Submap number m, 0-based.
    #[inline]
    pub fn index(&self) -> usize {
        self.index
    }

    /// First keyframe position covered (0-based).
    #[inline]
    pub fn start(&self) -> usize {
        self.start
    }

    /// One past the last keyframe position covered.
    #[inline]
    pub fn end(&self) -> usize {
        self.end
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    #[inline]
    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    #[inline]
    pub fn contains(&self, position: usize) -> bool {
        position >= self.start && position < self.end
    }

    /// Keyframe positions shared with another submap.
    pub fn overlap_with(&self, other: &Submap) -> std::ops::Range<usize> {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        lo..hi.max(lo)
    }
}

/// Subsamples keyframes from a posed sequence. The first frame is always
/// kept; a later frame is kept iff its translation exceeds `t_max` meters or
/// its rotation exceeds `r_max` degrees relative to the last kept frame.
pub fn select_keyframes<S: Real>(
    poses: &[Pose<S>],
    t_max: S,
    r_max_deg: S,
) -> Result<KeyframeSequence<S>, SubmapError> {
    if poses.is_empty() {
        return Err(SubmapError::EmptySequence);
    }
    if !(t_max > S::zero()) || !(r_max_deg > S::zero()) {
        return Err(SubmapError::InvalidThresholds {
            t_max: t_max.as_f64(),
            r_max: r_max_deg.as_f64(),
        });
    }
    let r_max_rad = r_max_deg * S::pi() / S::of(180.0);
    let mut entries = vec![Keyframe {
        frame_id: 0,
        pose: poses[0],
    }];
    let mut last = &poses[0];
    for (frame_id, pose) in poses.iter().enumerate().skip(1) {
        let trans = last.translation_distance(pose);
        let rot = last.rotation_angle_to(pose);
        if trans > t_max || rot > r_max_rad {
            entries.push(Keyframe {
                frame_id,
                pose: *pose,
            });
            last = pose;
        }
    }
    KeyframeSequence::new(entries)
}

/// Partitions keyframe positions `0..P` into overlapping windows: submap m
/// (1-based) covers positions `(m-1)(n-o) .. min((m-1)(n-o)+n, P)`. Windows
/// that would add no new positions are suppressed.
pub fn partition_submaps<S: Real>(
    seq: &KeyframeSequence<S>,
    cfg: &SubmapConfig,
) -> Vec<Submap> {
    let total = seq.len();
    let stride = cfg.window() - cfg.overlap();
    let mut submaps = Vec::new();
    let mut covered = 0usize;
    let mut m = 0usize;
    loop {
        let start = m * stride;
        if start >= total {
            break;
        }
        let end = (start + cfg.window()).min(total);
        if end <= covered {
            break;
        }
        submaps.push(Submap {
            index: submaps.len(),
            start,
            end,
        });
        covered = end;
        m += 1;
    }
    submaps
}
