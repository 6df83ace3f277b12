//! Sign-consistency correction for level sets built from leaky surfaces.
//!
//! Raw signed distances from a surface with holes carry wrong signs in the
//! "shadow" of each hole. Only signs within a narrow trust band around the
//! zero level are kept; everything else is rewritten by diffusion from the
//! trusted band: a cell-level sweep first (step A), then a data-point-level
//! sweep (step B). Magnitudes are never modified. Both sweeps are
//! synchronous (Jacobi) relaxations of a nearest-trusted-source field, so
//! the result does not depend on traversal order or thread count.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::execution::{for_each_band_package, for_each_index, ExecutionPolicy};
use crate::index::{delinearize, indices, linearize, neighborhood_offsets, pow};
use crate::mesh::{is_activated, singular_for_sign, SINGULAR_PACKAGES};
use crate::stencil::neighbour_index_shift;
use crate::util::UnsafeSlice;

use super::init::wire_neighborhood_slots;
use super::{LevelSetError, LevelSetLayer};

/// Which cells step A diffuses over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignScope {
    /// Every background cell; use on the coarsest layer so the far field
    /// of the whole domain gets a corrected sign.
    AllCells,
    /// Only activated packages, connected through their neighborhoods;
    /// refined layers are corrected inside their band only.
    ActivatedBand,
}

/// What the correction did.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignCorrectionReport {
    /// Data points inside the trust band (seeds, signs kept).
    pub trusted_points: usize,
    /// Data points whose sign was rewritten to a different value.
    pub flipped_points: usize,
    /// Step-A (cell) sweeps until stable.
    pub cell_sweeps: usize,
    /// Step-B (data-point) sweeps until stable.
    pub point_sweeps: usize,
    /// Points no diffusion reached (kept their original sign).
    pub unreached_points: usize,
}

/// Distance-plus-sign state for one site of the diffusion lattice.
type Site = (f64, i8);

const UNSET: Site = (f64::INFINITY, 0);

fn sign_of(v: f64) -> i8 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

/// Rewrite untrusted signs by two-step diffusion from the trust band and
/// restamp the far-field encoding (background words and singular
/// neighborhood slots) to match the corrected signs.
pub fn correct_sign_consistency<const D: usize>(
    layer: &mut LevelSetLayer<D>,
    trust_band: f64,
    scope: SignScope,
    policy: ExecutionPolicy,
) -> Result<SignCorrectionReport, LevelSetError> {
    let mut report = SignCorrectionReport::default();
    let geo = layer.mesh.geometry().clone();
    let cells = geo.cells_per_axis();
    let block = geo.block_len();
    let pkg_dims = [geo.pkg_size(); D];
    let n_packages = layer.mesh.total_packages();
    let meta: Vec<_> = layer.mesh.meta().to_vec();

    // Seed pass: mark trusted points and give every package cell a
    // cell-level seed from its trusted point nearest to the cell center.
    let mut point_state: Vec<Site> = vec![UNSET; n_packages * block];
    let mut package_seed: Vec<Site> = vec![UNSET; n_packages];
    {
        let phi = layer.phi.read();
        let mut tags = layer.near_interface_id.write();
        tags.fill(0);
        let points = UnsafeSlice::new(&mut point_state);
        let seeds = UnsafeSlice::new(&mut package_seed);
        let tag_slice = UnsafeSlice::new(&mut tags);
        for_each_band_package(policy, &meta, |pkg| {
            let cell = delinearize(meta[pkg].linear_cell as usize, cells);
            let center = geo.cell_center(cell.map(|c| c as i64));
            let mut best: Site = UNSET;
            for data in indices(pkg_dims) {
                let idx = pkg * block + linearize(data, pkg_dims);
                let value = phi[idx];
                if value.abs() < trust_band {
                    let s = sign_of(value);
                    // Disjoint per package.
                    unsafe {
                        points.write(idx, (0.0, s));
                        tag_slice.write(idx, s as i32);
                    }
                    let d = (geo.data_point_position(cell, data) - center).norm();
                    if d < best.0 {
                        best = (d, s);
                    }
                }
            }
            unsafe { seeds.write(pkg, best) };
        });
    }
    report.trusted_points = point_state.iter().filter(|s| s.1 != 0).count();
    if report.trusted_points == 0 {
        return Err(LevelSetError::NoTrustedPoints);
    }

    // Step A: cell-level diffusion.
    let cell_signs: Option<Vec<Site>> = match scope {
        SignScope::AllCells => {
            let mut state: Vec<Site> = vec![UNSET; geo.cell_count()];
            for (pkg, m) in meta.iter().enumerate().skip(SINGULAR_PACKAGES) {
                if package_seed[pkg].1 != 0 {
                    state[m.linear_cell as usize] = package_seed[pkg];
                }
            }
            let cell_size = geo.coarse_cell_size();
            let hop: Vec<([i64; D], f64)> = neighborhood_offsets::<D>()
                .filter(|o| *o != [1; D])
                .map(|o| {
                    let rel = o.map(|v| v as i64 - 1);
                    let norm = rel.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                    (rel, norm * cell_size)
                })
                .collect();
            let mut scratch = state.clone();
            loop {
                report.cell_sweeps += 1;
                let changed = AtomicBool::new(false);
                {
                    let out = UnsafeSlice::new(&mut scratch);
                    for_each_index(policy, state.len(), |lin| {
                        let cell = delinearize(lin, cells);
                        let mut best = state[lin];
                        for (rel, cost) in &hop {
                            let mut n = [0i64; D];
                            for k in 0..D {
                                n[k] = cell[k] as i64 + rel[k];
                            }
                            if !geo.cell_in_bounds(n) {
                                continue;
                            }
                            let nb = state[linearize(n.map(|c| c as usize), cells)];
                            if nb.1 != 0 && nb.0 + cost < best.0 {
                                best = (nb.0 + cost, nb.1);
                            }
                        }
                        if best != state[lin] {
                            changed.store(true, Ordering::Relaxed);
                        }
                        unsafe { out.write(lin, best) };
                    });
                }
                std::mem::swap(&mut state, &mut scratch);
                if !changed.load(Ordering::Relaxed) {
                    break;
                }
            }
            Some(state)
        }
        SignScope::ActivatedBand => {
            let mut state = package_seed.clone();
            let cell_size = geo.coarse_cell_size();
            let neighborhoods: Vec<u32> = layer.mesh.neighborhoods().to_vec();
            let stride = pow(3, D);
            let hop: Vec<(usize, f64)> = neighborhood_offsets::<D>()
                .enumerate()
                .filter(|(_, o)| *o != [1; D])
                .map(|(slot, o)| {
                    let norm = o
                        .iter()
                        .map(|&v| {
                            let r = v as f64 - 1.0;
                            r * r
                        })
                        .sum::<f64>()
                        .sqrt();
                    (slot, norm * cell_size)
                })
                .collect();
            let mut scratch = state.clone();
            loop {
                report.cell_sweeps += 1;
                let changed = AtomicBool::new(false);
                {
                    let out = UnsafeSlice::new(&mut scratch);
                    for_each_band_package(policy, &meta, |pkg| {
                        let mut best = state[pkg];
                        for (slot, cost) in &hop {
                            let nb_pkg = neighborhoods[pkg * stride + slot];
                            if !is_activated(nb_pkg) {
                                continue;
                            }
                            let nb = state[nb_pkg as usize];
                            if nb.1 != 0 && nb.0 + cost < best.0 {
                                best = (nb.0 + cost, nb.1);
                            }
                        }
                        if best != state[pkg] {
                            changed.store(true, Ordering::Relaxed);
                        }
                        unsafe { out.write(pkg, best) };
                    });
                }
                std::mem::swap(&mut state, &mut scratch);
                if !changed.load(Ordering::Relaxed) {
                    break;
                }
            }
            package_seed = state;
            None
        }
    };

    // Step B: data-point diffusion through package neighborhoods. Hops go
    // to the 3^D - 1 adjacent data points; singular neighbors are not
    // sources (the far field is restamped from the result afterwards).
    {
        let ds = geo.data_spacing();
        let hop: Vec<([i64; D], f64)> = neighborhood_offsets::<D>()
            .filter(|o| *o != [1; D])
            .map(|o| {
                let rel = o.map(|v| v as i64 - 1);
                let norm = rel.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                (rel, norm * ds)
            })
            .collect();
        let pkg_size = geo.pkg_size();
        let neighborhoods: Vec<u32> = layer.mesh.neighborhoods().to_vec();
        let stride = pow(3, D);
        let mut scratch = point_state.clone();
        loop {
            report.point_sweeps += 1;
            let changed = AtomicBool::new(false);
            {
                let out = UnsafeSlice::new(&mut scratch);
                let state = &point_state;
                for_each_band_package(policy, &meta, |pkg| {
                    let nbhd = crate::mesh::CellNeighborhood::<D>(
                        &neighborhoods[pkg * stride..(pkg + 1) * stride],
                    );
                    for data in indices(pkg_dims) {
                        let idx = pkg * block + linearize(data, pkg_dims);
                        let mut best = state[idx];
                        if best.0 > 0.0 {
                            for (rel, cost) in &hop {
                                let mut shift = [0i64; D];
                                for k in 0..D {
                                    shift[k] = data[k] as i64 + rel[k];
                                }
                                let target = neighbour_index_shift(shift, nbhd, pkg_size);
                                if (target.package as usize) < SINGULAR_PACKAGES {
                                    continue;
                                }
                                let nb = state[target.package as usize * block
                                    + linearize(target.data, pkg_dims)];
                                if nb.1 != 0 && nb.0 + cost < best.0 {
                                    best = (nb.0 + cost, nb.1);
                                }
                            }
                        }
                        if best != state[idx] {
                            changed.store(true, Ordering::Relaxed);
                        }
                        unsafe { out.write(idx, best) };
                    }
                });
            }
            std::mem::swap(&mut point_state, &mut scratch);
            if !changed.load(Ordering::Relaxed) {
                break;
            }
        }
    }

    // Apply: untrusted points adopt the diffused sign; unreached points
    // fall back to their cell's step-A sign, else keep their own.
    {
        let mut phi = layer.phi.write();
        for (pkg, m) in meta.iter().enumerate().skip(SINGULAR_PACKAGES) {
            let cell_fallback = match &cell_signs {
                Some(state) => state[m.linear_cell as usize].1,
                None => package_seed[pkg].1,
            };
            for entry in 0..block {
                let idx = pkg * block + entry;
                let mut sign = point_state[idx].1;
                if sign == 0 {
                    sign = cell_fallback;
                    if sign == 0 {
                        report.unreached_points += 1;
                        continue;
                    }
                }
                let value = phi[idx];
                if sign_of(value) != sign {
                    phi[idx] = f64::copysign(value, sign as f64);
                    report.flipped_points += 1;
                }
                point_state[idx].1 = sign;
            }
        }
    }

    restamp_far_field(layer, cell_signs.as_deref(), &point_state, policy);
    Ok(report)
}

/// Bring the far-field encoding in line with corrected signs: rewrite the
/// 0/1 background words of unactivated cells and rewire every singular
/// neighborhood slot.
fn restamp_far_field<const D: usize>(
    layer: &mut LevelSetLayer<D>,
    cell_signs: Option<&[Site]>,
    point_state: &[Site],
    policy: ExecutionPolicy,
) {
    let geo = layer.mesh.geometry().clone();
    let cells = geo.cells_per_axis();
    let block = geo.block_len();
    let pkg_size = geo.pkg_size();
    let pkg_dims = [pkg_size; D];
    let meta: Vec<_> = layer.mesh.meta().to_vec();

    // Sign of the package's data point facing a neighbor offset: the
    // band-edge value whose sign continues into the far field.
    let facing_sign = |pkg: usize, rel: [i64; D]| -> i8 {
        let mut data = [0usize; D];
        for k in 0..D {
            data[k] = match rel[k].signum() {
                -1 => 0,
                1 => pkg_size - 1,
                _ => pkg_size / 2,
            };
        }
        point_state[pkg * block + linearize(data, pkg_dims)].1
    };

    // Non-adjacent far cells take the step-A cell sign when the diffusion
    // covered all cells.
    if let Some(state) = cell_signs {
        let background = UnsafeSlice::new(layer.mesh.background_mut());
        for_each_index(policy, state.len(), |lin| {
            let current = unsafe { background.read(lin) };
            if !is_activated(current) && state[lin].1 != 0 {
                unsafe { background.write(lin, singular_for_sign(state[lin].1 as f64)) };
            }
        });
    }

    // Cells adjacent to the band are the ones band-edge stencils read;
    // their stamp must continue the corrected signs of the points facing
    // them, not a cell-center classification. Deterministic: the first
    // package in index order wins where two packages disagree.
    let mut stamps: Vec<(usize, i8)> = Vec::new();
    for (pkg, m) in meta.iter().enumerate().skip(SINGULAR_PACKAGES) {
        let cell = delinearize(m.linear_cell as usize, cells);
        for offset in neighborhood_offsets::<D>() {
            let rel = offset.map(|v| v as i64 - 1);
            if rel == [0; D] {
                continue;
            }
            let mut neighbor = [0i64; D];
            for k in 0..D {
                neighbor[k] = cell[k] as i64 + rel[k];
            }
            if !geo.cell_in_bounds(neighbor) {
                continue;
            }
            let lin = geo.linear_cell_index(neighbor.map(|c| c as usize));
            if !is_activated(layer.mesh.background_value(lin)) {
                let sign = facing_sign(pkg, rel);
                if sign != 0 {
                    stamps.push((lin, sign));
                }
            }
        }
    }
    stamps.sort_by_key(|&(lin, _)| lin);
    stamps.dedup_by_key(|&mut (lin, _)| lin);
    for (lin, sign) in stamps {
        layer
            .mesh
            .set_background_value(lin, singular_for_sign(sign as f64));
    }

    wire_neighborhood_slots(&mut layer.mesh, policy, |pkg, neighbor| {
        let cell = std::array::from_fn(|k| {
            let c = delinearize(meta[pkg].linear_cell as usize, cells)[k] as i64;
            (neighbor[k] - c).signum()
        });
        let sign = facing_sign(pkg, cell);
        if sign == 0 {
            singular_for_sign(1.0)
        } else {
            singular_for_sign(sign as f64)
        }
    });
}
