//! Binary little-endian PLY meshes, positions only.

use std::io::{BufWriter, Write};
use std::path::Path;

use mvrecon_core::TriangleMeshF64;
use nalgebra::Vector3;

use crate::error::{CliError, CliResult};

pub fn write_ply(path: &Path, mesh: &TriangleMeshF64) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::input_at(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    let io_err = |e: std::io::Error| CliError::input_at(path, e);
    w.write_all(header.as_bytes()).map_err(io_err)?;
    for v in mesh.vertices() {
        for c in [v.x, v.y, v.z] {
            w.write_all(&(c as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    for f in mesh.faces() {
        w.write_all(&[3u8]).map_err(io_err)?;
        for &i in f {
            w.write_all(&(i as i32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarType {
    F32,
    F64,
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
}

impl ScalarType {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            "uchar" | "uint8" => ScalarType::U8,
            "char" | "int8" => ScalarType::I8,
            "ushort" | "uint16" => ScalarType::U16,
            "short" | "int16" => ScalarType::I16,
            "uint" | "uint32" => ScalarType::U32,
            "int" | "int32" => ScalarType::I32,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::U8 | ScalarType::I8 => 1,
            ScalarType::U16 | ScalarType::I16 => 2,
            ScalarType::F32 | ScalarType::U32 | ScalarType::I32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_f64(self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U16 => u16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            ScalarType::I16 => i16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        }
    }
}

/// Reads a binary little-endian PLY with vertex x/y/z (float or double;
/// other vertex properties are skipped) and uchar-counted index lists.
pub fn read_ply(path: &Path) -> CliResult<TriangleMeshF64> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input_at(path, e))?;
    let bad = |msg: &str| CliError::input_at(path, msg.to_string());

    let header_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| bad("missing end_header"))?
        + 11;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| bad("header is not valid UTF-8"))?;

    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut vertex_props: Vec<(String, ScalarType)> = Vec::new();
    let mut face_list: Option<(ScalarType, ScalarType)> = None;
    let mut current = "";
    let mut format_seen = false;
    for line in header.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["ply"] | ["end_header"] => {}
            ["comment", ..] => {}
            ["format", kind, _] => {
                if *kind != "binary_little_endian" {
                    return Err(bad("only binary little-endian PLY is supported"));
                }
                format_seen = true;
            }
            ["element", "vertex", n] => {
                vertex_count = n.parse().map_err(|_| bad("bad vertex count"))?;
                current = "vertex";
            }
            ["element", "face", n] => {
                face_count = n.parse().map_err(|_| bad("bad face count"))?;
                current = "face";
            }
            ["element", _, n] => {
                // Unknown element: we cannot skip it safely since property
                // sizes follow; reject unless empty.
                let count: usize = n.parse().map_err(|_| bad("bad element count"))?;
                if count > 0 {
                    return Err(bad("unsupported extra PLY element"));
                }
                current = "other";
            }
            ["property", "list", count_ty, index_ty, _name] if current == "face" => {
                let count_ty = ScalarType::parse(count_ty).ok_or_else(|| bad("bad list type"))?;
                let index_ty = ScalarType::parse(index_ty).ok_or_else(|| bad("bad index type"))?;
                face_list = Some((count_ty, index_ty));
            }
            ["property", ty, name] if current == "vertex" => {
                let ty = ScalarType::parse(ty).ok_or_else(|| bad("bad property type"))?;
                vertex_props.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            [] => {}
            _ => return Err(bad("unrecognized header line")),
        }
    }
    if !format_seen {
        return Err(bad("missing format line"));
    }

    let find = |name: &str| -> CliResult<(usize, ScalarType)> {
        let mut offset = 0;
        for (prop, ty) in &vertex_props {
            if prop == name {
                return Ok((offset, *ty));
            }
            offset += ty.size();
        }
        Err(bad(&format!("vertex property '{name}' missing")))
    };
    let (x_off, x_ty) = find("x")?;
    let (y_off, y_ty) = find("y")?;
    let (z_off, z_ty) = find("z")?;
    let stride: usize = vertex_props.iter().map(|(_, t)| t.size()).sum();

    let mut cursor = header_end;
    if bytes.len() < cursor + stride * vertex_count {
        return Err(bad("vertex data truncated"));
    }
    let mut vertices = Vec::with_capacity(vertex_count);
    for _ in 0..vertex_count {
        let rec = &bytes[cursor..cursor + stride];
        vertices.push(Vector3::new(
            x_ty.read_f64(&rec[x_off..]),
            y_ty.read_f64(&rec[y_off..]),
            z_ty.read_f64(&rec[z_off..]),
        ));
        cursor += stride;
    }

    let mut faces = Vec::with_capacity(face_count);
    if face_count > 0 {
        let (count_ty, index_ty) = face_list.ok_or_else(|| bad("face element lacks index list"))?;
        for _ in 0..face_count {
            if bytes.len() < cursor + count_ty.size() {
                return Err(bad("face data truncated"));
            }
            let n = count_ty.read_f64(&bytes[cursor..]) as usize;
            cursor += count_ty.size();
            if n != 3 {
                return Err(bad("only triangle faces are supported"));
            }
            if bytes.len() < cursor + 3 * index_ty.size() {
                return Err(bad("face data truncated"));
            }
            let mut face = [0u32; 3];
            for slot in &mut face {
                *slot = index_ty.read_f64(&bytes[cursor..]) as u32;
                cursor += index_ty.size();
            }
            faces.push(face);
        }
    }

    TriangleMeshF64::new(vertices, faces).map_err(|e| CliError::input_at(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_mesh() -> TriangleMeshF64 {
        TriangleMeshF64::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.5),
                Vector3::new(1.0, 1.0, -0.25),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_preserves_f32_geometry_and_topology() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mesh = sample_mesh();
        write_ply(&path, &mesh).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.faces(), mesh.faces());
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            assert_eq!(a.x, b.x as f32 as f64);
            assert_eq!(a.y, b.y as f32 as f64);
            assert_eq!(a.z, b.z as f32 as f64);
        }
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ply"), dir.path().join("b.ply"));
        write_ply(&p1, &sample_mesh()).unwrap();
        write_ply(&p2, &sample_mesh()).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn ascii_ply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 0\nelement face 0\nend_header\n",
        )
        .unwrap();
        assert!(read_ply(&path).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mesh = sample_mesh();
        write_ply(&path, &mesh).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_ply(&path).is_err());
    }
}
