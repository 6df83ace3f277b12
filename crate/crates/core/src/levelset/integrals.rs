//! Interior-volume integrals with a compact smoothing kernel, evaluated as
//! lattice sums over the data-point grid, and the small-feature cleaning
//! pass built on them.

use crate::execution::{for_each_band_package, ExecutionPolicy};
use crate::geometry::Position;
use crate::index::{delinearize, indices, linearize, pow};
use crate::kernel::{smoothed_heaviside, SmoothingKernel};
use crate::mesh::CellNeighborhood;
use crate::stencil::{general_shift, neighbour_index_shift, value_at};
use crate::util::UnsafeSlice;

use super::{reinitialize, LevelSetLayer};

/// One contributing lattice offset within the kernel support.
struct Tap<const D: usize> {
    rel: [i64; D],
    weight: f64,
    grad: Position<D>,
}

/// Offsets within the support radius, with weights and gradient directions.
/// The gradient tap for contributor `y` points from `y` away through the
/// evaluation point (`W' ≤ 0`), so a half-space of interior contributors
/// yields a gradient integral along the outward surface normal.
fn taps<const D: usize>(kernel: &SmoothingKernel<D>, ds: f64) -> Vec<Tap<D>> {
    let reach = (kernel.support_radius() / ds).ceil() as i64;
    let mut out = Vec::new();
    let dims = [(2 * reach + 1) as usize; D];
    for raw in indices(dims) {
        let rel: [i64; D] = std::array::from_fn(|k| raw[k] as i64 - reach);
        let r = rel
            .iter()
            .map(|&v| (v * v) as f64)
            .sum::<f64>()
            .sqrt()
            * ds;
        if r >= kernel.support_radius() {
            continue;
        }
        let weight = kernel.w(r);
        let grad = if r > 0.0 {
            let mut unit = Position::<D>::zeros();
            for k in 0..D {
                unit[k] = rel[k] as f64 * ds / r;
            }
            unit * kernel.dw_dr(r)
        } else {
            Position::zeros()
        };
        out.push(Tap { rel, weight, grad });
    }
    out
}

/// Lattice sum of the kernel over the data-point grid — the raw value a
/// deep-interior integral evaluates to before normalization. The integral
/// routines divide by this so a fully interior support reports exactly 1.
pub fn lattice_normalization<const D: usize>(kernel: &SmoothingKernel<D>, ds: f64) -> f64 {
    taps(kernel, ds).iter().map(|t| t.weight).sum::<f64>() * ds.powi(D as i32)
}

/// Evaluate, at every data point of every activated package, the smoothed
/// interior indicator integral and its gradient over the kernel support:
/// contributions are `H(−φ(y)) · W(|x−y|)` summed over the data-point
/// lattice, normalized so a fully interior support gives exactly 1.
/// Neighbors beyond the 3^D neighborhood are routed through the general
/// background lookup; points outside the mesh count as exterior.
pub fn compute_kernel_integrals<const D: usize>(
    layer: &LevelSetLayer<D>,
    kernel: &SmoothingKernel<D>,
    policy: ExecutionPolicy,
) {
    let mesh = &layer.mesh;
    let geo = mesh.geometry();
    let ds = geo.data_spacing();
    let pkg_size = geo.pkg_size();
    let pkg_dims = [pkg_size; D];
    let block = geo.block_len();
    let stride = pow(3, D);
    let cells = geo.cells_per_axis();
    let meta = mesh.meta();
    let neighborhoods = mesh.neighborhoods();

    let taps = taps(kernel, ds);
    let norm = 1.0 / taps.iter().map(|t| t.weight).sum::<f64>();
    let eps = ds;

    let phi = layer.phi.read();
    let mut integral = layer.kernel_integral.write();
    let mut gradient = layer.kernel_gradient_integral.write();
    let out_i = UnsafeSlice::new(&mut integral);
    let out_g = UnsafeSlice::new(&mut gradient);
    for_each_band_package(policy, meta, |pkg| {
        let nbhd = CellNeighborhood::<D>(&neighborhoods[pkg * stride..(pkg + 1) * stride]);
        let cell = delinearize(meta[pkg].linear_cell as usize, cells);
        for data in indices(pkg_dims) {
            let mut acc = 0.0;
            let mut acc_grad = Position::<D>::zeros();
            for tap in &taps {
                let mut shift = [0i64; D];
                let mut in_neighborhood = true;
                for k in 0..D {
                    shift[k] = data[k] as i64 + tap.rel[k];
                    in_neighborhood &=
                        (-(pkg_size as i64)..2 * pkg_size as i64).contains(&shift[k]);
                }
                let value = if in_neighborhood {
                    let r = neighbour_index_shift(shift, nbhd, pkg_size);
                    value_at(&phi, r.package, r.data, pkg_size)
                } else {
                    match general_shift(mesh, cell, data, tap.rel) {
                        Ok(r) => value_at(&phi, r.package, r.data, pkg_size),
                        // Outside the mesh counts as exterior.
                        Err(_) => continue,
                    }
                };
                let h = smoothed_heaviside(-value, eps);
                if h > 0.0 {
                    acc += h * tap.weight;
                    acc_grad += tap.grad * h;
                }
            }
            let idx = pkg * block + linearize(data, pkg_dims);
            // Packages are disjoint across iterations.
            unsafe {
                out_i.write(idx, acc * norm);
                out_g.write(idx, acc_grad * (norm * ds.powi(D as i32)));
            }
        }
    });
}

/// Carve away interface features too thin to hold interior volume: points
/// near the zero level (|φ| < data_spacing) whose kernel integral falls
/// below `threshold` are pushed to +data_spacing, then the field is
/// reinitialized; repeated until stable or five rounds. Returns the number
/// of carved points per round.
pub fn clean_small_features<const D: usize>(
    layer: &LevelSetLayer<D>,
    kernel: &SmoothingKernel<D>,
    threshold: f64,
    reinit_steps: usize,
    cfl: f64,
    policy: ExecutionPolicy,
) -> Vec<usize> {
    const MAX_ROUNDS: usize = 5;
    let mesh = &layer.mesh;
    let geo = mesh.geometry();
    let ds = geo.data_spacing();
    let block = geo.block_len();
    let meta = mesh.meta();

    let mut rounds = Vec::new();
    for _ in 0..MAX_ROUNDS {
        compute_kernel_integrals(layer, kernel, policy);
        let mut carved: Vec<usize> = vec![0; mesh.total_packages()];
        {
            let integral = layer.kernel_integral.read();
            let mut phi = layer.phi.write();
            let out = UnsafeSlice::new(&mut phi);
            let counts = UnsafeSlice::new(&mut carved);
            for_each_band_package(policy, meta, |pkg| {
                let mut n = 0;
                for entry in pkg * block..(pkg + 1) * block {
                    // Each iteration only touches its own package's slots.
                    let value = unsafe { out.read(entry) };
                    if value.abs() < ds && integral[entry] < threshold {
                        unsafe { out.write(entry, ds) };
                        n += 1;
                    }
                }
                unsafe { counts.write(pkg, n) };
            });
        }
        let modified: usize = carved.iter().sum();
        rounds.push(modified);
        if modified == 0 {
            break;
        }
        reinitialize(layer, reinit_steps, cfl, policy);
    }
    rounds
}
