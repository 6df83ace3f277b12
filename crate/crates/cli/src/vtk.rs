//! Legacy-VTK structured-points export of a probe-sampled scalar window.
//!
//! Samples lie on the data lattice of the chosen layer (`lower +
//! (i + 1/2)·ds` per axis), so with no window the output is exactly the
//! layer's data points. Samples in unactivated regions interpolate the
//! singular far-field values and come out at roughly ±10⁴ cell sizes.

use anyhow::{bail, Context, Result};
use nalgebra::vector;

use pkggrid::{stencil, LevelSetLayer};

/// Placement of a sampled scalar window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub spacing: f64,
}

/// Sample φ on the data sub-lattice covered by `[lower, upper]`
/// (axis-wise; `None` spans the whole grid). Values run x-fastest, which
/// is the structured-points point order.
pub fn sample_phi(
    layer: &LevelSetLayer<3>,
    lower: Option<[f64; 3]>,
    upper: Option<[f64; 3]>,
) -> Result<(Window, Vec<f64>)> {
    let geo = layer.mesh.geometry();
    let ds = geo.data_spacing();
    let counts = geo.data_counts();

    let mut first = [0usize; 3];
    let mut dims = [0usize; 3];
    for axis in 0..3 {
        // Data-point index range whose positions fall inside the window.
        let to_index = |p: f64| (p - geo.lower()[axis]) / ds - 0.5;
        let lo = match lower {
            Some(w) => to_index(w[axis]).ceil().max(0.0) as usize,
            None => 0,
        };
        let hi = match upper {
            Some(w) => {
                let u = to_index(w[axis]).floor();
                if u < 0.0 {
                    bail!("window lies below the grid on axis {axis}");
                }
                (u as usize).min(counts[axis] - 1)
            }
            None => counts[axis] - 1,
        };
        if lo > hi || lo >= counts[axis] {
            bail!("window covers no data points on axis {axis}");
        }
        first[axis] = lo;
        dims[axis] = hi - lo + 1;
    }

    let origin = [
        geo.lower()[0] + (first[0] as f64 + 0.5) * ds,
        geo.lower()[1] + (first[1] as f64 + 0.5) * ds,
        geo.lower()[2] + (first[2] as f64 + 0.5) * ds,
    ];
    let phi = layer.phi.read();
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = vector![
                    origin[0] + i as f64 * ds,
                    origin[1] + j as f64 * ds,
                    origin[2] + k as f64 * ds
                ];
                let v = stencil::probe(&layer.mesh, &phi, p)
                    .context("window sample left the grid")?;
                values.push(v);
            }
        }
    }
    Ok((
        Window {
            origin,
            dims,
            spacing: ds,
        },
        values,
    ))
}

/// Render a legacy-VTK structured-points dataset with one double scalar
/// per point.
pub fn structured_points(window: &Window, field_name: &str, values: &[f64]) -> String {
    let point_count = window.dims.iter().product::<usize>();
    assert_eq!(values.len(), point_count);
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("level-set window\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_POINTS\n");
    out.push_str(&format!(
        "DIMENSIONS {} {} {}\n",
        window.dims[0], window.dims[1], window.dims[2]
    ));
    out.push_str(&format!(
        "ORIGIN {} {} {}\n",
        window.origin[0], window.origin[1], window.origin[2]
    ));
    out.push_str(&format!(
        "SPACING {} {} {}\n",
        window.spacing, window.spacing, window.spacing
    ));
    out.push_str(&format!("POINT_DATA {point_count}\n"));
    out.push_str(&format!("SCALARS {field_name} double 1\n"));
    out.push_str("LOOKUP_TABLE default\n");
    for value in values {
        out.push_str(&value.to_string());
        out.push('\n');
    }
    out
}

/// Render a legacy-VTK polydata point cloud (one vertex cell per point so
/// viewers draw the particles without further filters).
pub fn point_cloud(positions: &[pkggrid::Position<3>]) -> String {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("particle cloud\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET POLYDATA\n");
    out.push_str(&format!("POINTS {} double\n", positions.len()));
    for p in positions {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    out.push_str(&format!(
        "VERTICES {} {}\n",
        positions.len(),
        2 * positions.len()
    ));
    for i in 0..positions.len() {
        out.push_str(&format!("1 {i}\n"));
    }
    out
}
