//! Shared fixtures for the microbenchmarks: deterministic narrow-band
//! layers at realistic occupancies, plus the slot lists the sweeps run
//! over so fixture preparation stays out of the timed sections.

use nalgebra::vector;
use pkggrid::index::delinearize;
use pkggrid::mesh::SINGULAR_PACKAGES;
use pkggrid::sdf::SphericalShell;
use pkggrid::{ExecutionPolicy, GridGeometry, LevelSetLayer};

/// Spherical-shell layer over the unit cube with `resolution` data points
/// per axis (package size 4) — the standard fixture for storage and
/// stencil sweeps. The shell walls are thin against the resolution, so the
/// band occupies a few percent of the background like production inputs.
pub fn shell_layer(resolution: usize) -> LevelSetLayer<3> {
    assert_eq!(resolution % 4, 0, "resolution must be a multiple of the package size");
    let cells = resolution / 4;
    let geometry =
        GridGeometry::new(vector![0.0, 0.0, 0.0], 4.0 / resolution as f64, [cells; 3], 4)
            .expect("valid unit-cube geometry");
    let mut layer = LevelSetLayer::new(geometry).expect("constructible layer");
    let shell = SphericalShell {
        center: vector![0.5, 0.5, 0.5],
        inner_radius: 0.3,
        outer_radius: 0.31,
    };
    layer
        .initialize(&shell, None, ExecutionPolicy::Sequential)
        .expect("initialization succeeds");
    layer
}

/// Every activated package paired with its background cell.
pub fn activated_cells(layer: &LevelSetLayer<3>) -> Vec<(u32, [usize; 3])> {
    let cells = layer.mesh.geometry().cells_per_axis();
    layer
        .mesh
        .meta()
        .iter()
        .enumerate()
        .skip(SINGULAR_PACKAGES)
        .map(|(pkg, meta)| (pkg as u32, delinearize(meta.linear_cell as usize, cells)))
        .collect()
}
