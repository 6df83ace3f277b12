//! Particle serialization: binary little-endian PLY and plain CSV.

use super::{ParticleError, ParticleSet};
use crate::geometry::Position;

const AXES: [&str; 3] = ["x", "y", "z"];

/// Wire formats understood by [`export_particles`] and
/// [`import_particles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleFormat {
    /// Binary little-endian PLY with one float64 property per axis.
    Ply,
    /// Plain CSV with an `x,y,z` header and shortest round-trip decimals.
    Csv,
}

impl ParticleFormat {
    /// Parse a user-facing tag (CLI argument or file suffix).
    pub fn from_tag(tag: &str) -> Result<Self, ParticleError> {
        match tag.to_ascii_lowercase().as_str() {
            "ply" => Ok(ParticleFormat::Ply),
            "csv" => Ok(ParticleFormat::Csv),
            _ => Err(ParticleError::UnknownFormat(tag.to_string())),
        }
    }
}

/// Serialize the particle positions. CSV keeps positions bitwise through
/// a reload because every coordinate is printed as the shortest decimal
/// that parses back to the same float.
pub fn export_particles<const D: usize>(set: &ParticleSet<D>, format: ParticleFormat) -> Vec<u8> {
    assert!(D >= 1 && D <= 3, "particle export names at most three axes");
    match format {
        ParticleFormat::Csv => {
            let mut out = String::new();
            out.push_str(&AXES[..D].join(","));
            out.push('\n');
            for p in &set.positions {
                for k in 0..D {
                    if k > 0 {
                        out.push(',');
                    }
                    out.push_str(&p[k].to_string());
                }
                out.push('\n');
            }
            out.into_bytes()
        }
        ParticleFormat::Ply => {
            let mut out = Vec::new();
            out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
            out.extend_from_slice(format!("element vertex {}\n", set.len()).as_bytes());
            for axis in &AXES[..D] {
                out.extend_from_slice(format!("property double {axis}\n").as_bytes());
            }
            out.extend_from_slice(b"end_header\n");
            for p in &set.positions {
                for k in 0..D {
                    out.extend_from_slice(&p[k].to_le_bytes());
                }
            }
            out
        }
    }
}

/// Reload positions written by [`export_particles`]. The reference
/// spacing is not stored in either format and must be supplied.
pub fn import_particles<const D: usize>(
    bytes: &[u8],
    format: ParticleFormat,
    reference_spacing: f64,
) -> Result<ParticleSet<D>, ParticleError> {
    let positions = match format {
        ParticleFormat::Csv => parse_csv::<D>(bytes)?,
        ParticleFormat::Ply => parse_ply::<D>(bytes)?,
    };
    Ok(ParticleSet {
        positions,
        reference_spacing,
    })
}

fn parse_csv<const D: usize>(bytes: &[u8]) -> Result<Vec<Position<D>>, ParticleError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParticleError::Malformed(format!("csv is not utf-8: {e}")))?;
    let mut lines = text.lines();
    let expected = AXES[..D].join(",");
    match lines.next() {
        Some(header) if header == expected => {}
        Some(header) => {
            return Err(ParticleError::Malformed(format!(
                "expected header `{expected}`, got `{header}`"
            )))
        }
        None => return Err(ParticleError::Malformed("empty csv payload".into())),
    }
    let mut positions = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut p = Position::<D>::zeros();
        for k in 0..D {
            let field = fields
                .next()
                .ok_or_else(|| ParticleError::Malformed(format!("row {row} has too few fields")))?;
            p[k] = field
                .parse()
                .map_err(|e| ParticleError::Malformed(format!("row {row}: {e}")))?;
        }
        if fields.next().is_some() {
            return Err(ParticleError::Malformed(format!("row {row} has too many fields")));
        }
        positions.push(p);
    }
    Ok(positions)
}

fn parse_ply<const D: usize>(bytes: &[u8]) -> Result<Vec<Position<D>>, ParticleError> {
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| ParticleError::Malformed("ply header terminator missing".into()))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|e| ParticleError::Malformed(format!("ply header is not utf-8: {e}")))?;
    if !header.starts_with("ply\nformat binary_little_endian 1.0\n") {
        return Err(ParticleError::Malformed("not a binary little-endian ply".into()));
    }
    let count: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .ok_or_else(|| ParticleError::Malformed("ply vertex element missing".into()))?
        .trim()
        .parse()
        .map_err(|e| ParticleError::Malformed(format!("ply vertex count: {e}")))?;
    let body = &bytes[end + marker.len()..];
    if body.len() != count * D * 8 {
        return Err(ParticleError::Malformed(format!(
            "ply body holds {} bytes, expected {}",
            body.len(),
            count * D * 8
        )));
    }
    let mut positions = Vec::with_capacity(count);
    for chunk in body.chunks_exact(D * 8) {
        let mut p = Position::<D>::zeros();
        for k in 0..D {
            p[k] = f64::from_le_bytes(chunk[k * 8..(k + 1) * 8].try_into().unwrap());
        }
        positions.push(p);
    }
    Ok(positions)
}
