//! Narrow-band level-set layers on the package grid.
//!
//! A [`LevelSetLayer`] owns one mesh plus the standard field set (level-set
//! value, gradient, kernel integrals, near-interface tag) and is initialized
//! in five steps: tag core cells, tag inner cells, sort-and-activate,
//! evaluate distances, build neighborhoods. [`MultiResolutionLevelSet`]
//! stacks layers with successively doubled resolution over identical bounds,
//! each refined layer tagging only under its parent's core footprint.
//!
//! On top of initialization the module provides sign-consistency correction
//! for leaky input surfaces, reinitialization toward a unit-gradient
//! distance field, smoothing-kernel integrals, and small-feature cleaning.

mod consistency;
mod init;
mod integrals;
mod reinit;

pub use consistency::{correct_sign_consistency, SignCorrectionReport, SignScope};
pub use init::rebuild_neighborhoods;
pub use integrals::{clean_small_features, compute_kernel_integrals, lattice_normalization};
pub use reinit::{compute_gradient, reinitialize, reinitialize_with_residuals};

use thiserror::Error;

use crate::execution::ExecutionPolicy;
use crate::geometry::{GeometryError, GridGeometry, Position};
use crate::kernel::SmoothingKernel;
use crate::mesh::{Mesh, MeshError};
use crate::sdf::SignedDistance;
use crate::variable::MeshVariable;

/// Name of the level-set value variable.
pub const PHI: &str = "phi";
/// Name of the level-set gradient variable.
pub const PHI_GRADIENT: &str = "phi_gradient";
/// Name of the smoothing-kernel integral variable.
pub const KERNEL_INTEGRAL: &str = "kernel_integral";
/// Name of the smoothing-kernel gradient integral variable.
pub const KERNEL_GRADIENT_INTEGRAL: &str = "kernel_gradient_integral";
/// Name of the near-interface tag variable (±1 trusted sign, 0 otherwise).
pub const NEAR_INTERFACE_ID: &str = "near_interface_id";

/// Errors raised by level-set construction and correction.
#[derive(Debug, Error)]
pub enum LevelSetError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("spacing must be positive, got {0}")]
    NonpositiveSpacing(f64),
    #[error("target spacing {target} exceeds coarsest spacing {coarsest}")]
    TargetCoarserThanCoarsest { target: f64, coarsest: f64 },
    #[error("extent along axis {axis} is not an integer number of coarse cells")]
    NonIntegerCellCount { axis: usize },
    #[error("no data point lies within the trust band; geometry misses the mesh")]
    NoTrustedPoints,
}

/// Tunable parameters of the level-set pipeline. Spacings are data-point
/// spacings (the coarse cell size is `pkg_size` times larger); `trust_band`
/// and `kernel_h` are expressed as multiples of each layer's data spacing.
#[derive(Debug, Clone, Copy)]
pub struct LevelSetParams {
    /// Data spacing of the coarsest layer.
    pub coarsest_spacing: f64,
    /// Upper bound on the finest layer's data spacing.
    pub target_spacing: f64,
    /// Half-width of the trusted sign band, in data spacings.
    pub trust_band: f64,
    /// Smoothing length of the integral kernel, in data spacings.
    pub kernel_h_ratio: f64,
    /// Kernel-integral threshold below which a near-zero point is carved.
    pub clean_threshold: f64,
    /// Reinitialization steps after each cleaning round.
    pub reinit_steps: usize,
    /// Pseudo-time step as a fraction of the data spacing.
    pub cfl: f64,
    /// Edge length of one cubic data package.
    pub pkg_size: usize,
}

impl Default for LevelSetParams {
    fn default() -> Self {
        LevelSetParams {
            coarsest_spacing: 1.0 / 64.0,
            target_spacing: 1.0 / 64.0,
            trust_band: 1.0,
            kernel_h_ratio: 1.0,
            clean_threshold: 0.25,
            reinit_steps: 40,
            cfl: 0.3,
            pkg_size: 4,
        }
    }
}

/// Number of layers needed to reach `target` from `coarsest` by halving:
/// the smallest `n` with `coarsest / 2^(n-1) <= target`.
pub fn count_layers(coarsest: f64, target: f64) -> Result<usize, LevelSetError> {
    if !(coarsest > 0.0) {
        return Err(LevelSetError::NonpositiveSpacing(coarsest));
    }
    if !(target > 0.0) {
        return Err(LevelSetError::NonpositiveSpacing(target));
    }
    if target > coarsest {
        return Err(LevelSetError::TargetCoarserThanCoarsest { target, coarsest });
    }
    let mut n = 1;
    let mut spacing = coarsest;
    while spacing > target * (1.0 + 1e-12) {
        spacing *= 0.5;
        n += 1;
    }
    Ok(n)
}

/// One narrow-band layer: a mesh plus the standard level-set variables.
pub struct LevelSetLayer<const D: usize> {
    pub mesh: Mesh<D>,
    pub phi: MeshVariable<f64>,
    pub phi_gradient: MeshVariable<Position<D>>,
    pub kernel_integral: MeshVariable<f64>,
    pub kernel_gradient_integral: MeshVariable<Position<D>>,
    pub near_interface_id: MeshVariable<i32>,
}

impl<const D: usize> LevelSetLayer<D> {
    /// Create an empty layer over the given geometry with all five
    /// standard variables registered.
    pub fn new(geometry: GridGeometry<D>) -> Result<Self, LevelSetError> {
        let mut mesh = Mesh::new(geometry);
        let phi = mesh.register_mesh_variable::<f64>(PHI)?;
        let phi_gradient = mesh.register_mesh_variable::<Position<D>>(PHI_GRADIENT)?;
        let kernel_integral = mesh.register_mesh_variable::<f64>(KERNEL_INTEGRAL)?;
        let kernel_gradient_integral =
            mesh.register_mesh_variable::<Position<D>>(KERNEL_GRADIENT_INTEGRAL)?;
        let near_interface_id = mesh.register_mesh_variable::<i32>(NEAR_INTERFACE_ID)?;
        Ok(LevelSetLayer {
            mesh,
            phi,
            phi_gradient,
            kernel_integral,
            kernel_gradient_integral,
            near_interface_id,
        })
    }

    /// Far-field magnitude: large enough to dominate any in-band value,
    /// finite to keep arithmetic well-defined.
    pub fn large_value(&self) -> f64 {
        1e4 * self.mesh.geometry().coarse_cell_size()
    }

    /// Data spacing of this layer.
    pub fn data_spacing(&self) -> f64 {
        self.mesh.geometry().data_spacing()
    }

    /// Run the five initialization steps against a signed-distance source.
    /// With a `parent`, only cells under the parent's core footprint are
    /// considered for tagging.
    pub fn initialize(
        &mut self,
        sdf: &dyn SignedDistance<D>,
        parent: Option<&LevelSetLayer<D>>,
        policy: ExecutionPolicy,
    ) -> Result<(), LevelSetError> {
        let tagged = init::tag_cells(&self.mesh, sdf, parent.map(|p| &p.mesh), policy);
        self.mesh.activate_cells(tagged)?;
        init::fill_singular_phi(self);
        init::evaluate_level_set_values(self, sdf, policy);
        init::build_neighborhoods(self, sdf, policy);
        Ok(())
    }

    /// Smoothing kernel matching this layer's spacing and the given ratio.
    pub fn kernel(&self, h_ratio: f64) -> SmoothingKernel<D> {
        SmoothingKernel::new(h_ratio * self.data_spacing())
    }
}

/// Stack of layers ordered coarse to fine; each layer halves the spacing
/// of its predecessor over identical physical bounds.
pub struct MultiResolutionLevelSet<const D: usize> {
    pub layers: Vec<LevelSetLayer<D>>,
}

impl<const D: usize> MultiResolutionLevelSet<D> {
    /// Build and initialize all layers for the given bounds: tag, sort,
    /// activate, evaluate and wire neighborhoods per layer, coarse first.
    pub fn initialize(
        sdf: &dyn SignedDistance<D>,
        lower: Position<D>,
        extent: Position<D>,
        params: &LevelSetParams,
        policy: ExecutionPolicy,
    ) -> Result<Self, LevelSetError> {
        let n_layers = count_layers(params.coarsest_spacing, params.target_spacing)?;
        let mut layers: Vec<LevelSetLayer<D>> = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let spacing = params.coarsest_spacing / (1 << k) as f64;
            let cell_size = spacing * params.pkg_size as f64;
            let mut cells = [0usize; D];
            for axis in 0..D {
                let n = extent[axis] / cell_size;
                if (n - n.round()).abs() > 1e-9 * n.max(1.0) || n.round() < 1.0 {
                    return Err(LevelSetError::NonIntegerCellCount { axis });
                }
                cells[axis] = n.round() as usize;
            }
            let geometry = GridGeometry::new(lower, cell_size, cells, params.pkg_size)?;
            let mut layer = LevelSetLayer::new(geometry)?;
            layer.initialize(sdf, layers.last(), policy)?;
            layers.push(layer);
        }
        Ok(MultiResolutionLevelSet { layers })
    }

    pub fn coarsest(&self) -> &LevelSetLayer<D> {
        &self.layers[0]
    }

    pub fn finest(&self) -> &LevelSetLayer<D> {
        self.layers.last().expect("at least one layer")
    }

    pub fn finest_mut(&mut self) -> &mut LevelSetLayer<D> {
        self.layers.last_mut().expect("at least one layer")
    }
}
