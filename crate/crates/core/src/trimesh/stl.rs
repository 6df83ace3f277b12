//! STL reading and writing (binary and ASCII).
//!
//! Stored facet normals are ignored on load; the mesh recomputes normals
//! from welded geometry, which is what the sign of the distance relies on.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use super::{TriMeshError, TriangleMesh};

const BINARY_HEADER_LEN: usize = 80;
const BINARY_RECORD_LEN: usize = 50;

/// Errors from STL parsing.
#[derive(Debug, Error)]
pub enum StlError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("file too short for a binary header ({0} bytes)")]
    ShortHeader(usize),
    #[error("binary record count {count} needs {expected} bytes, file has {actual}")]
    Truncated {
        count: u32,
        expected: usize,
        actual: usize,
    },
    #[error("ascii parse error at line {line}: {message}")]
    Ascii { line: usize, message: String },
    #[error("file contains no triangles")]
    Empty,
    #[error(transparent)]
    Mesh(#[from] TriMeshError),
}

/// Load an STL file, auto-detecting ASCII vs binary, and weld coincident
/// vertices (tolerance: 1e-6 of the bounding-box diagonal).
pub fn load(path: impl AsRef<Path>) -> Result<TriangleMesh, StlError> {
    let bytes = fs::read(path)?;
    parse(&bytes)
}

/// Parse STL bytes, auto-detecting the format. Files that begin with
/// `solid` are tried as ASCII first; anything else must be binary.
pub fn parse(bytes: &[u8]) -> Result<TriangleMesh, StlError> {
    let looks_ascii = bytes
        .iter()
        .position(|b| !b.is_ascii_whitespace())
        .map(|i| bytes[i..].starts_with(b"solid"))
        .unwrap_or(false);
    if looks_ascii {
        match parse_ascii(bytes) {
            Ok(soup) => return build(soup),
            Err(ascii_err) => {
                // Binary files may legally start with "solid"; fall back.
                return match parse_binary(bytes) {
                    Ok(soup) => build(soup),
                    Err(_) => Err(ascii_err),
                };
            }
        }
    }
    build(parse_binary(bytes)?)
}

fn build(soup: Vec<[Vector3<f64>; 3]>) -> Result<TriangleMesh, StlError> {
    if soup.is_empty() {
        return Err(StlError::Empty);
    }
    Ok(TriangleMesh::from_soup(&soup, None)?)
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Vector3<f64>; 3]>, StlError> {
    if bytes.len() < BINARY_HEADER_LEN + 4 {
        return Err(StlError::ShortHeader(bytes.len()));
    }
    let count = u32::from_le_bytes(bytes[BINARY_HEADER_LEN..BINARY_HEADER_LEN + 4].try_into().unwrap());
    let expected = BINARY_HEADER_LEN + 4 + count as usize * BINARY_RECORD_LEN;
    if bytes.len() != expected {
        return Err(StlError::Truncated {
            count,
            expected,
            actual: bytes.len(),
        });
    }
    let mut soup = Vec::with_capacity(count as usize);
    let mut offset = BINARY_HEADER_LEN + 4;
    for _ in 0..count {
        // Record: normal (3 f32, ignored), three vertices, u16 attribute.
        let mut tri = [Vector3::zeros(); 3];
        for (v, corner) in tri.iter_mut().enumerate() {
            let base = offset + 12 + v * 12;
            for k in 0..3 {
                let le: [u8; 4] = bytes[base + 4 * k..base + 4 * k + 4].try_into().unwrap();
                corner[k] = f32::from_le_bytes(le) as f64;
            }
        }
        soup.push(tri);
        offset += BINARY_RECORD_LEN;
    }
    Ok(soup)
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Vector3<f64>; 3]>, StlError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StlError::Ascii {
        line: 0,
        message: format!("not utf-8: {e}"),
    })?;
    let err = |line: usize, message: &str| StlError::Ascii {
        line,
        message: message.to_string(),
    };

    let mut soup = Vec::new();
    let mut corners: Vec<Vector3<f64>> = Vec::new();
    let mut seen_endsolid = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut tokens = raw.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword.to_ascii_lowercase().as_str() {
            "solid" | "outer" | "endloop" | "endfacet" | "facet" => {}
            "endsolid" => seen_endsolid = true,
            "vertex" => {
                let mut p = Vector3::zeros();
                for k in 0..3 {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| err(line, "vertex needs three coordinates"))?;
                    p[k] = tok
                        .parse::<f64>()
                        .map_err(|_| err(line, "vertex coordinate is not a number"))?;
                }
                corners.push(p);
                if corners.len() == 3 {
                    soup.push([corners[0], corners[1], corners[2]]);
                    corners.clear();
                }
            }
            other => {
                return Err(err(line, &format!("unexpected keyword `{other}`")));
            }
        }
    }
    if !corners.is_empty() {
        return Err(err(text.lines().count(), "dangling vertices at end of file"));
    }
    if !seen_endsolid {
        return Err(err(text.lines().count(), "missing `endsolid`"));
    }
    Ok(soup)
}

/// Serialize triangles as binary STL (normals recomputed, attribute 0).
pub fn write_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let tris = mesh.triangles();
    let verts = mesh.vertices();
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + 4 + tris.len() * BINARY_RECORD_LEN);
    out.extend_from_slice(&[0u8; BINARY_HEADER_LEN]);
    out.extend_from_slice(&(tris.len() as u32).to_le_bytes());
    for tri in tris {
        let [a, b, c] = [
            verts[tri[0] as usize],
            verts[tri[1] as usize],
            verts[tri[2] as usize],
        ];
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for v in [n, a, b, c] {
            for k in 0..3 {
                out.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

/// Serialize triangles as ASCII STL.
pub fn write_ascii(mesh: &TriangleMesh, name: &str) -> String {
    let mut out = format!("solid {name}\n");
    let verts = mesh.vertices();
    for tri in mesh.triangles() {
        let [a, b, c] = [
            verts[tri[0] as usize],
            verts[tri[1] as usize],
            verts[tri[2] as usize],
        ];
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        out.push_str(&format!("  facet normal {} {} {}\n", n.x, n.y, n.z));
        out.push_str("    outer loop\n");
        for v in [a, b, c] {
            out.push_str(&format!("      vertex {} {} {}\n", v.x, v.y, v.z));
        }
        out.push_str("    endloop\n");
        out.push_str("  endfacet\n");
    }
    out.push_str(&format!("endsolid {name}\n"));
    out
}
