//! Body-fitted particle generation and relaxation on a level-set layer.
//!
//! Particles seed a regular lattice restricted to the non-positive side of
//! the level set, then relax under pairwise kernel repulsion plus the
//! interpolated surface force, with a projection that keeps every particle
//! below the zero level. All field access is multilinear interpolation of
//! the layer's variables at the particle position, so the relaxation only
//! reads the grid through [`probe`].

mod grid;
mod io;

pub use io::{export_particles, import_particles, ParticleFormat};

use thiserror::Error;

use crate::execution::{for_each_index, ExecutionPolicy};
use crate::geometry::Position;
use crate::index::indices;
use crate::kernel::SmoothingKernel;
use crate::levelset::LevelSetLayer;
use crate::stencil::probe;
use crate::util::UnsafeSlice;

use grid::BucketGrid;

#[derive(Debug, Error)]
pub enum ParticleError {
    #[error("unknown particle format tag `{0}` (expected `ply` or `csv`)")]
    UnknownFormat(String),
    #[error("malformed particle payload: {0}")]
    Malformed(String),
}

/// Equal-size particles tied to the lattice spacing they were seeded on.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet<const D: usize> {
    pub positions: Vec<Position<D>>,
    /// Seeding lattice spacing `dp`; one particle represents `dp^D` volume.
    pub reference_spacing: f64,
}

impl<const D: usize> ParticleSet<D> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Volume represented by one particle.
    pub fn particle_volume(&self) -> f64 {
        self.reference_spacing.powi(D as i32)
    }
}

/// Tunables of the physical relaxation.
#[derive(Debug, Clone, Copy)]
pub struct RelaxationParams {
    /// Number of relaxation sweeps.
    pub steps: usize,
    /// Per-sweep displacement clamp, as a fraction of the particle spacing.
    pub step_scale: f64,
    /// Depth below the zero level enforced by the bounding projection.
    pub surface_offset: f64,
}

impl RelaxationParams {
    /// Defaults for particle spacing `dp`: moves clamped to `0.2·dp`,
    /// particles kept at least `0.5·dp` inside the surface.
    pub fn for_spacing(dp: f64) -> Self {
        RelaxationParams {
            steps: 100,
            step_scale: 0.2,
            surface_offset: 0.5 * dp,
        }
    }
}

/// Seed particles on the lattice `lower + (i + 0.5)·dp`, keeping points
/// whose interpolated level-set value is non-positive. Lattice points
/// outside the probeable region are skipped, so a body that misses the
/// mesh yields an empty set.
pub fn generate_lattice_particles<const D: usize>(
    layer: &LevelSetLayer<D>,
    dp: f64,
) -> ParticleSet<D> {
    assert!(dp > 0.0 && dp.is_finite(), "particle spacing must be positive");
    let geo = layer.mesh.geometry();
    let mut counts = [0usize; D];
    for k in 0..D {
        counts[k] = (geo.extent()[k] / dp).ceil() as usize;
    }
    let phi = layer.phi.read();
    let mut positions = Vec::new();
    for idx in indices(counts) {
        let mut p = geo.lower();
        for k in 0..D {
            p[k] += (idx[k] as f64 + 0.5) * dp;
        }
        if let Ok(v) = probe(&layer.mesh, &phi, p) {
            if v <= 0.0 {
                positions.push(p);
            }
        }
    }
    ParticleSet {
        positions,
        reference_spacing: dp,
    }
}

/// Relax particle positions against the level set. Each sweep accumulates,
/// per particle, the pairwise repulsion `Σ_j −∇W(x_i − x_j) · V` with a
/// kernel of smoothing length `1.3·dp` plus the interpolated surface force
/// `probe(kernel_gradient_integral) · V`, clamps the move to
/// `step_scale·dp`, and then projects anything shallower than
/// `surface_offset` back along the interpolated level-set gradient.
///
/// Positions are double-buffered per sweep and each particle's neighbor
/// sum runs in a fixed order, so the result is bitwise identical across
/// execution policies. The layer's gradient and kernel-gradient integrals
/// must have been computed beforehand; where they were not (or where a
/// probe leaves the mesh) the corresponding term is simply zero.
pub fn relax_particles<const D: usize>(
    layer: &LevelSetLayer<D>,
    particles: &ParticleSet<D>,
    params: &RelaxationParams,
    policy: ExecutionPolicy,
) -> ParticleSet<D> {
    assert!(
        params.step_scale > 0.0 && params.step_scale <= 1.0,
        "step scale must lie in (0, 1]"
    );
    let dp = particles.reference_spacing;
    let volume = particles.particle_volume();
    let kernel = SmoothingKernel::<D>::new(1.3 * dp);
    let max_move = params.step_scale * dp;

    let phi = layer.phi.read();
    let gradient = layer.phi_gradient.read();
    let surface = layer.kernel_gradient_integral.read();

    let mut current = particles.positions.clone();
    let mut next = vec![Position::<D>::zeros(); current.len()];
    for _ in 0..params.steps {
        let buckets = BucketGrid::build(&current, kernel.support_radius());
        {
            let out = UnsafeSlice::new(&mut next);
            let positions = current.as_slice();
            for_each_index(policy, positions.len(), |i| {
                let x = positions[i];
                let mut disp = Position::<D>::zeros();
                buckets.for_each_neighbor(&x, |j| {
                    if j != i {
                        disp -= kernel.grad_w(x - positions[j]) * volume;
                    }
                });
                if let Ok(force) = probe(&layer.mesh, &surface, x) {
                    disp += force * volume;
                }
                let norm = disp.norm();
                if norm > max_move {
                    disp *= max_move / norm;
                }
                let mut moved = x + disp;
                // Bounding projection. One move lands within interpolation
                // error of the offset depth; the few repeats tighten that
                // to a strict containment guarantee.
                for _ in 0..4 {
                    let (Ok(value), Ok(normal)) =
                        (probe(&layer.mesh, &phi, moved), probe(&layer.mesh, &gradient, moved))
                    else {
                        break;
                    };
                    if value <= -params.surface_offset {
                        break;
                    }
                    let len = normal.norm();
                    if len < 1e-12 {
                        break;
                    }
                    moved -= normal * ((value + params.surface_offset) / len);
                }
                unsafe { out.write(i, moved) };
            });
        }
        std::mem::swap(&mut current, &mut next);
    }
    ParticleSet {
        positions: current,
        reference_spacing: dp,
    }
}
