//! On-disk snapshot of a multi-resolution level set.
//!
//! Layout (all little-endian): an 8-byte magic, a `u32` layer count, then
//! per layer the grid geometry, the activated-cell list, the full
//! background field (its far-field words carry the sign of unactivated
//! regions and must survive a reload), and the raw `phi` array including
//! the two singular far-field blocks. Neighborhood slot tables are derived
//! data and are rebuilt on load instead of being stored.

use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::vector;

use pkggrid::levelset::rebuild_neighborhoods;
use pkggrid::{
    ExecutionPolicy, GridGeometry, LevelSetLayer, MultiResolutionLevelSet, PackageCategory,
    PackageIndex,
};

const MAGIC: &[u8; 8] = b"PKGGRID1";

/// Serialize every layer of the set.
pub fn encode(set: &MultiResolutionLevelSet<3>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(set.layers.len() as u32).unwrap();
    for layer in &set.layers {
        encode_layer(layer, &mut out);
    }
    out
}

fn encode_layer(layer: &LevelSetLayer<3>, out: &mut Vec<u8>) {
    let geo = layer.mesh.geometry();
    for axis in 0..3 {
        out.write_f64::<LittleEndian>(geo.lower()[axis]).unwrap();
    }
    out.write_f64::<LittleEndian>(geo.coarse_cell_size()).unwrap();
    for axis in 0..3 {
        out.write_u64::<LittleEndian>(geo.cells_per_axis()[axis] as u64)
            .unwrap();
    }
    out.write_u32::<LittleEndian>(geo.pkg_size() as u32).unwrap();

    let activated = &layer.mesh.meta()[pkggrid::mesh::SINGULAR_PACKAGES..];
    out.write_u64::<LittleEndian>(activated.len() as u64).unwrap();
    for meta in activated {
        out.write_u64::<LittleEndian>(meta.linear_cell).unwrap();
        out.write_u8(meta.category as u8).unwrap();
    }

    let background = layer.mesh.background();
    out.write_u64::<LittleEndian>(background.len() as u64).unwrap();
    for &word in background {
        out.write_u32::<LittleEndian>(word).unwrap();
    }

    let phi = layer.phi.read();
    out.write_u64::<LittleEndian>(phi.len() as u64).unwrap();
    for &value in phi.iter() {
        out.write_f64::<LittleEndian>(value).unwrap();
    }
}

/// Rebuild the set from serialized bytes. `policy` drives the neighborhood
/// rewiring sweep.
pub fn decode(bytes: &[u8], policy: ExecutionPolicy) -> Result<MultiResolutionLevelSet<3>> {
    let mut cursor = std::io::Cursor::new(bytes);
    let mut magic = [0u8; 8];
    cursor
        .read_exact(&mut magic)
        .context("artifact too short for its magic")?;
    if &magic != MAGIC {
        bail!("not a level-set artifact (bad magic)");
    }
    let layer_count = cursor.read_u32::<LittleEndian>()?;
    if layer_count == 0 {
        bail!("artifact holds no layers");
    }
    let mut layers = Vec::with_capacity(layer_count as usize);
    for index in 0..layer_count {
        layers.push(
            decode_layer(&mut cursor, policy)
                .with_context(|| format!("decoding layer {index}"))?,
        );
    }
    if cursor.position() != bytes.len() as u64 {
        bail!("artifact has trailing bytes");
    }
    Ok(MultiResolutionLevelSet { layers })
}

fn decode_layer(
    cursor: &mut std::io::Cursor<&[u8]>,
    policy: ExecutionPolicy,
) -> Result<LevelSetLayer<3>> {
    let mut lower = [0.0; 3];
    for slot in &mut lower {
        *slot = cursor.read_f64::<LittleEndian>()?;
    }
    let cell_size = cursor.read_f64::<LittleEndian>()?;
    let mut cells = [0usize; 3];
    for slot in &mut cells {
        *slot = cursor.read_u64::<LittleEndian>()? as usize;
    }
    let pkg_size = cursor.read_u32::<LittleEndian>()? as usize;
    let geometry = GridGeometry::new(
        vector![lower[0], lower[1], lower[2]],
        cell_size,
        cells,
        pkg_size,
    )?;
    let mut layer = LevelSetLayer::new(geometry)?;

    let meta_count = cursor.read_u64::<LittleEndian>()? as usize;
    let mut tagged = Vec::with_capacity(meta_count);
    for _ in 0..meta_count {
        let linear_cell = cursor.read_u64::<LittleEndian>()? as usize;
        let raw = cursor.read_u8()?;
        let category = PackageCategory::from_u8(raw)
            .filter(|c| !c.is_singular())
            .with_context(|| format!("cell {linear_cell} has invalid category byte {raw}"))?;
        if linear_cell >= layer.mesh.geometry().cell_count() {
            bail!("cell index {linear_cell} lies outside the stored grid");
        }
        tagged.push((linear_cell, category));
    }
    layer.mesh.activate_cells(tagged)?;

    let background_count = cursor.read_u64::<LittleEndian>()? as usize;
    if background_count != layer.mesh.geometry().cell_count() {
        bail!(
            "background field holds {background_count} words, grid has {} cells",
            layer.mesh.geometry().cell_count()
        );
    }
    let total_packages = layer.mesh.total_packages() as PackageIndex;
    for linear_cell in 0..background_count {
        let word = cursor.read_u32::<LittleEndian>()?;
        if word >= total_packages {
            bail!("background word {word} at cell {linear_cell} exceeds the package count");
        }
        layer.mesh.set_background_value(linear_cell, word);
    }
    for (offset, meta) in layer.mesh.meta()[pkggrid::mesh::SINGULAR_PACKAGES..]
        .iter()
        .enumerate()
    {
        let expected = (pkggrid::mesh::SINGULAR_PACKAGES + offset) as PackageIndex;
        if layer.mesh.background_value(meta.linear_cell as usize) != expected {
            bail!(
                "background word at cell {} disagrees with the activated-cell list",
                meta.linear_cell
            );
        }
    }

    let phi_len = cursor.read_u64::<LittleEndian>()? as usize;
    if phi_len != layer.phi.len() {
        bail!(
            "phi array holds {phi_len} values, activated mesh needs {}",
            layer.phi.len()
        );
    }
    {
        let mut phi = layer.phi.write();
        for slot in phi.iter_mut() {
            *slot = cursor.read_f64::<LittleEndian>()?;
        }
    }

    rebuild_neighborhoods(&mut layer, policy);
    Ok(layer)
}

pub fn save(set: &MultiResolutionLevelSet<3>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(set))
        .with_context(|| format!("writing artifact {}", path.display()))
}

pub fn load(path: &Path, policy: ExecutionPolicy) -> Result<MultiResolutionLevelSet<3>> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading artifact {}", path.display()))?;
    decode(&bytes, policy).with_context(|| format!("decoding artifact {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pkggrid::sdf::Sphere;
    use pkggrid::LevelSetParams;

    fn small_set() -> MultiResolutionLevelSet<3> {
        let sphere = Sphere::<3> {
            center: vector![0.5, 0.5, 0.5],
            radius: 0.3,
        };
        let params = LevelSetParams {
            coarsest_spacing: 1.0 / 16.0,
            target_spacing: 1.0 / 32.0,
            ..LevelSetParams::default()
        };
        MultiResolutionLevelSet::initialize(
            &sphere,
            vector![0.0, 0.0, 0.0],
            vector![1.0, 1.0, 1.0],
            &params,
            ExecutionPolicy::Sequential,
        )
        .unwrap()
    }

    #[test]
    fn a_round_trip_is_bitwise_and_rebuilds_the_topology() {
        let set = small_set();
        let bytes = encode(&set);
        let restored = decode(&bytes, ExecutionPolicy::Sequential).unwrap();
        assert_eq!(restored.layers.len(), set.layers.len());
        for (a, b) in set.layers.iter().zip(&restored.layers) {
            assert_eq!(a.mesh.geometry(), b.mesh.geometry());
            assert_eq!(a.mesh.meta(), b.mesh.meta());
            assert_eq!(a.mesh.background(), b.mesh.background());
            assert_eq!(a.mesh.neighborhoods(), b.mesh.neighborhoods());
            let (pa, pb) = (a.phi.read(), b.phi.read());
            assert!(pa.iter().zip(pb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // Serializing the restored set reproduces the file byte for byte.
        assert_eq!(encode(&restored), bytes);
    }

    #[test]
    fn corrupted_artifacts_are_rejected() {
        let set = small_set();
        let bytes = encode(&set);
        assert!(decode(&bytes[..6], ExecutionPolicy::Sequential).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic, ExecutionPolicy::Sequential).is_err());
        let mut truncated = bytes.clone();
        truncated.truncate(bytes.len() - 9);
        assert!(decode(&truncated, ExecutionPolicy::Sequential).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode(&trailing, ExecutionPolicy::Sequential).is_err());
    }
}
