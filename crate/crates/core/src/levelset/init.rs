//! The five-step layer initialization: tag core cells, tag inner cells,
//! sort and activate, evaluate level-set values, build neighborhoods.

use std::collections::{BTreeSet, HashSet};

use parking_lot::Mutex;

use crate::execution::{for_each_band_package, for_each_cell, for_each_index, CellRange, ExecutionPolicy};
use crate::index::{delinearize, indices, linearize, neighborhood_offsets};
use crate::mesh::{is_activated, singular_for_sign, Mesh, PackageCategory};
use crate::sdf::SignedDistance;
use crate::util::UnsafeSlice;

use super::LevelSetLayer;

/// Steps 1–3 input: tag core cells (center closer to the surface than one
/// coarse cell), then inner cells (non-core cells with a core nearest
/// neighbor). The returned list is unordered; activation sorts it.
pub(super) fn tag_cells<const D: usize>(
    mesh: &Mesh<D>,
    sdf: &dyn SignedDistance<D>,
    parent: Option<&Mesh<D>>,
    policy: ExecutionPolicy,
) -> Vec<(usize, PackageCategory)> {
    let geo = mesh.geometry();
    let cells = geo.cells_per_axis();
    let cell_size = geo.coarse_cell_size();

    let core_list: Mutex<Vec<usize>> = Mutex::new(Vec::new());
    let is_core_cell = |cell: [usize; D]| {
        let center = geo.cell_center(cell.map(|c| c as i64));
        sdf.distance(center) < cell_size
    };
    match parent {
        None => {
            for_each_cell(policy, CellRange::full(cells), |cell| {
                if is_core_cell(cell) {
                    core_list.lock().push(geo.linear_cell_index(cell));
                }
            });
        }
        Some(parent_mesh) => {
            // Refined layers only test cells under the parent core
            // footprint: each parent cell covers 2^D children.
            let parent_cells = parent_mesh.geometry().cells_per_axis();
            let parent_core: Vec<[usize; D]> = parent_mesh
                .meta()
                .iter()
                .filter(|m| m.category == PackageCategory::Core)
                .map(|m| delinearize(m.linear_cell as usize, parent_cells))
                .collect();
            for_each_index(policy, parent_core.len(), |i| {
                for child in indices([2usize; D]) {
                    let mut cell = [0usize; D];
                    for k in 0..D {
                        cell[k] = parent_core[i][k] * 2 + child[k];
                    }
                    if is_core_cell(cell) {
                        core_list.lock().push(geo.linear_cell_index(cell));
                    }
                }
            });
        }
    }
    let core_list = core_list.into_inner();
    let core_set: HashSet<usize> = core_list.iter().copied().collect();

    // Step 2: inner cells, deduplicated across adjacent core cells.
    let mut inner: BTreeSet<usize> = BTreeSet::new();
    for &core in &core_list {
        let cell = delinearize(core, cells);
        for offset in neighborhood_offsets::<D>() {
            let mut neighbor = [0i64; D];
            for k in 0..D {
                neighbor[k] = cell[k] as i64 + offset[k] as i64 - 1;
            }
            if !geo.cell_in_bounds(neighbor) {
                continue;
            }
            let lin = geo.linear_cell_index(neighbor.map(|c| c as usize));
            if !core_set.contains(&lin) {
                inner.insert(lin);
            }
        }
    }

    let mut tagged: Vec<(usize, PackageCategory)> = Vec::with_capacity(core_list.len() + inner.len());
    tagged.extend(core_list.iter().map(|&c| (c, PackageCategory::Core)));
    tagged.extend(inner.iter().map(|&c| (c, PackageCategory::Inner)));
    tagged
}

/// Stamp the two singular packages' level-set blocks with the far-field
/// constants −LARGE / +LARGE.
pub(super) fn fill_singular_phi<const D: usize>(layer: &LevelSetLayer<D>) {
    let block = layer.mesh.block_len();
    let large = layer.large_value();
    let mut phi = layer.phi.write();
    phi[..block].fill(-large);
    phi[block..2 * block].fill(large);
}

/// Step 4: evaluate the signed distance at every data point of every
/// activated package.
pub(super) fn evaluate_level_set_values<const D: usize>(
    layer: &LevelSetLayer<D>,
    sdf: &dyn SignedDistance<D>,
    policy: ExecutionPolicy,
) {
    let mesh = &layer.mesh;
    let geo = mesh.geometry();
    let cells = geo.cells_per_axis();
    let block = geo.block_len();
    let pkg_dims = [geo.pkg_size(); D];

    let mut phi = layer.phi.write();
    let phi_slice = UnsafeSlice::new(&mut phi);
    for_each_band_package(policy, mesh.meta(), |pkg| {
        let cell = delinearize(mesh.meta()[pkg].linear_cell as usize, cells);
        for data in indices(pkg_dims) {
            let p = geo.data_point_position(cell, data);
            let idx = pkg * block + linearize(data, pkg_dims);
            // Packages are disjoint across iterations.
            unsafe { phi_slice.write(idx, sdf.signed_distance(p)) };
        }
    });
}

/// Step 5: stamp every unactivated background cell with the far-field
/// singular index matching the sign of the distance at its center, then
/// point each activated package's 3^D neighborhood slots at the neighbor
/// package (or the matching singular package outside the band or mesh).
pub(super) fn build_neighborhoods<const D: usize>(
    layer: &mut LevelSetLayer<D>,
    sdf: &dyn SignedDistance<D>,
    policy: ExecutionPolicy,
) {
    let mesh = &mut layer.mesh;
    let geo = mesh.geometry().clone();
    let cells = geo.cells_per_axis();

    {
        let background = UnsafeSlice::new(mesh.background_mut());
        for_each_index(policy, geo.cell_count(), |lin| {
            // Each iteration touches only its own cell.
            let current = unsafe { background.read(lin) };
            if !is_activated(current) {
                let cell = delinearize(lin, cells);
                let sign = sdf.signed_distance(geo.cell_center(cell.map(|c| c as i64)));
                unsafe { background.write(lin, singular_for_sign(sign)) };
            }
        });
    }

    wire_neighborhood_slots(mesh, policy, |_, neighbor| {
        singular_for_sign(sdf.signed_distance(geo.cell_center(neighbor)))
    });
}

/// Rewire every activated package's neighborhood slots from the current
/// background field alone. Out-of-mesh neighbors resolve to the singular
/// package matching the sign of the package's own facing value, so the
/// topology can be rebuilt from stored state — neighborhoods are derived
/// data and are not serialized.
pub fn rebuild_neighborhoods<const D: usize>(layer: &mut LevelSetLayer<D>, policy: ExecutionPolicy) {
    let geo = layer.mesh.geometry().clone();
    let cells = geo.cells_per_axis();
    let block = geo.block_len();
    let pkg_size = geo.pkg_size();
    let meta: Vec<_> = layer.mesh.meta().to_vec();
    let phi: Vec<f64> = layer.phi.read().to_vec();
    wire_neighborhood_slots(&mut layer.mesh, policy, |pkg, neighbor| {
        let cell = delinearize(meta[pkg].linear_cell as usize, cells);
        let mut data = [0usize; D];
        for k in 0..D {
            data[k] = match (neighbor[k] - cell[k] as i64).signum() {
                -1 => 0,
                1 => pkg_size - 1,
                _ => pkg_size / 2,
            };
        }
        singular_for_sign(phi[pkg * block + linearize(data, [pkg_size; D])])
    });
}

/// Point every activated package's 3^D slots at the neighbor cell's
/// background entry; neighbor cells outside the mesh get the singular
/// index chosen by `out_of_mesh(pkg, neighbor_cell)`.
pub(super) fn wire_neighborhood_slots<const D: usize>(
    mesh: &mut Mesh<D>,
    policy: ExecutionPolicy,
    out_of_mesh: impl Fn(usize, [i64; D]) -> u32 + Sync,
) {
    let geo = mesh.geometry().clone();
    let cells = geo.cells_per_axis();
    let stride = mesh.neighborhood_stride();
    let first = crate::mesh::SINGULAR_PACKAGES;
    let mut slots = vec![0u32; (mesh.total_packages() - first) * stride];
    {
        let out = UnsafeSlice::new(&mut slots);
        let meta = mesh.meta();
        let background = mesh.background();
        for_each_band_package(policy, meta, |pkg| {
            let cell = delinearize(meta[pkg].linear_cell as usize, cells);
            for (slot, offset) in neighborhood_offsets::<D>().enumerate() {
                let mut neighbor = [0i64; D];
                for k in 0..D {
                    neighbor[k] = cell[k] as i64 + offset[k] as i64 - 1;
                }
                let value = if geo.cell_in_bounds(neighbor) {
                    background[linearize(neighbor.map(|c| c as usize), cells)]
                } else {
                    out_of_mesh(pkg, neighbor)
                };
                // Slot ranges are disjoint per package.
                unsafe { out.write((pkg - first) * stride + slot, value) };
            }
        });
    }
    mesh.neighborhoods_mut()[first * stride..].copy_from_slice(&slots);
}
