//! Reinitialization: relax the level-set field toward a signed distance
//! function (|∇φ| = 1) by pseudo-time iteration with a Godunov upwind
//! gradient and a sign frozen from the initial field.

use crate::execution::{for_each_band_package, ExecutionPolicy};
use crate::index::{indices, linearize, pow};
use crate::mesh::CellNeighborhood;
use crate::stencil::{central_average, godunov_upwind, regularized_central_difference};
use crate::util::UnsafeSlice;

use super::LevelSetLayer;

/// Relax φ toward |∇φ| = 1 over `n_steps` pseudo-time steps of size
/// `cfl · data_spacing`, double-buffered so the result is independent of
/// package visitation order.
pub fn reinitialize<const D: usize>(
    layer: &LevelSetLayer<D>,
    n_steps: usize,
    cfl: f64,
    policy: ExecutionPolicy,
) {
    reinitialize_with_residuals(layer, n_steps, cfl, policy);
}

/// [`reinitialize`], additionally returning the band mean of the gradient
/// defect ||∇φ| − 1| before each step and after the last one
/// (`n_steps + 1` values).
pub fn reinitialize_with_residuals<const D: usize>(
    layer: &LevelSetLayer<D>,
    n_steps: usize,
    cfl: f64,
    policy: ExecutionPolicy,
) -> Vec<f64> {
    let mesh = &layer.mesh;
    let geo = mesh.geometry();
    let ds = geo.data_spacing();
    let pkg_size = geo.pkg_size();
    let pkg_dims = [pkg_size; D];
    let block = geo.block_len();
    let stride = pow(3, D);
    let meta = mesh.meta();
    let neighborhoods = mesh.neighborhoods();
    let dtau = cfl * ds;

    let mut cur: Vec<f64> = layer.phi.read().to_vec();
    // The sign is frozen from the input field; points exactly on the zero
    // level never move.
    let frozen_sign: Vec<f64> = cur
        .iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                f64::copysign(1.0, v)
            }
        })
        .collect();
    let mut next = cur.clone();
    let mut partial: Vec<(f64, usize)> = vec![(0.0, 0); mesh.total_packages()];

    // One sweep: Godunov gradient per point from the current buffer,
    // update into `out`, per-package residual sums for the mean defect.
    let sweep = |state: &[f64], out: &mut [f64], partial: &mut [(f64, usize)]| {
        let out = UnsafeSlice::new(out);
        let sums = UnsafeSlice::new(partial);
        for_each_band_package(policy, meta, |pkg| {
            let nbhd = CellNeighborhood::<D>(&neighborhoods[pkg * stride..(pkg + 1) * stride]);
            let mut sum = 0.0;
            let mut count = 0usize;
            for data in indices(pkg_dims) {
                let idx = pkg * block + linearize(data, pkg_dims);
                let s = frozen_sign[idx];
                let value = state[idx];
                let updated = if s == 0.0 {
                    value
                } else {
                    let diffs = regularized_central_difference(
                        state,
                        nbhd,
                        data,
                        pkg_size,
                        godunov_upwind(s),
                    );
                    let grad_norm =
                        diffs.iter().map(|d| d * d).sum::<f64>().sqrt() / ds;
                    sum += (grad_norm - 1.0).abs();
                    count += 1;
                    value - dtau * s * (grad_norm - 1.0)
                };
                // Packages are disjoint across iterations.
                unsafe { out.write(idx, updated) };
            }
            unsafe { sums.write(pkg, (sum, count)) };
        });
    };
    // Deterministic reduction: fixed package order regardless of policy.
    let reduce = |partial: &[(f64, usize)]| -> f64 {
        let (sum, count) = partial
            .iter()
            .fold((0.0, 0usize), |(s, c), &(ps, pc)| (s + ps, c + pc));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };

    let mut residuals = Vec::with_capacity(n_steps + 1);
    for _ in 0..n_steps {
        sweep(&cur, &mut next, &mut partial);
        residuals.push(reduce(&partial));
        std::mem::swap(&mut cur, &mut next);
    }
    sweep(&cur, &mut next, &mut partial);
    residuals.push(reduce(&partial));

    layer.phi.write().copy_from_slice(&cur);
    residuals
}

/// Fill the gradient variable with the centered-difference gradient of φ
/// on every activated package.
pub fn compute_gradient<const D: usize>(layer: &LevelSetLayer<D>, policy: ExecutionPolicy) {
    let mesh = &layer.mesh;
    let geo = mesh.geometry();
    let ds = geo.data_spacing();
    let pkg_size = geo.pkg_size();
    let pkg_dims = [pkg_size; D];
    let block = geo.block_len();
    let stride = pow(3, D);
    let meta = mesh.meta();
    let neighborhoods = mesh.neighborhoods();

    let phi = layer.phi.read();
    let mut gradient = layer.phi_gradient.write();
    let out = UnsafeSlice::new(&mut gradient);
    for_each_band_package(policy, meta, |pkg| {
        let nbhd = CellNeighborhood::<D>(&neighborhoods[pkg * stride..(pkg + 1) * stride]);
        for data in indices(pkg_dims) {
            let diffs =
                regularized_central_difference(&phi, nbhd, data, pkg_size, central_average);
            let mut g = crate::geometry::Position::<D>::zeros();
            for k in 0..D {
                g[k] = diffs[k] / ds;
            }
            let idx = pkg * block + linearize(data, pkg_dims);
            // Packages are disjoint across iterations.
            unsafe { out.write(idx, g) };
        }
    });
}
