//! Sparse narrow-band Cartesian grids with contiguous data packages.
//!
//! The grid activates only background cells near a surface and stores all
//! per-cell data in flat structure-of-arrays packages addressed by a
//! single index, so stencil access, interpolation and whole-band sweeps
//! run over contiguous memory on host or (stub) device backends. On top of
//! the storage layer sit a multi-resolution level-set pipeline built from
//! signed-distance geometry (triangle meshes or analytic shapes) and a
//! body-fitted particle generator driven by that level set.

pub mod execution;
pub mod geometry;
pub mod index;
pub mod kernel;
pub mod levelset;
pub mod mesh;
pub mod particles;
pub mod sdf;
pub mod stencil;
pub mod trimesh;
pub mod util;
pub mod variable;

pub use execution::{CellRange, ExecutionPolicy};
pub use geometry::{GeometryError, GridGeometry, Position};
pub use kernel::SmoothingKernel;
pub use levelset::{
    count_layers, LevelSetError, LevelSetLayer, LevelSetParams, MultiResolutionLevelSet,
    SignCorrectionReport, SignScope,
};
pub use mesh::{
    CellNeighborhood, Mesh, MeshAudit, MeshError, MetaCell, PackageCategory, PackageIndex,
};
pub use particles::{ParticleError, ParticleFormat, ParticleSet, RelaxationParams};
pub use sdf::SignedDistance;
pub use stencil::{GridValue, PackageDataIndex, StencilError};
pub use trimesh::TriangleMesh;
pub use variable::{MeshVariable, MigrationStats};
