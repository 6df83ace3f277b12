//! Stencil access across package borders.
//!
//! All neighbor access is index arithmetic on top of the per-package
//! neighborhood table: a shift relative to a package's origin resolves to
//! one of its `3^D` neighborhood slots plus an in-package data index, so a
//! stencil never walks the background mesh. [`general_shift`] is the
//! unrestricted fallback that routes any offset through the background
//! field, including into unactivated far-field cells.

use nalgebra::SVector;
use thiserror::Error;

use crate::geometry::Position;
use crate::index::{linearize, pow};
use crate::mesh::{CellNeighborhood, Mesh, PackageIndex};

#[derive(Debug, Error, PartialEq)]
pub enum StencilError {
    #[error("shift target cell {0:?} lies outside the background mesh")]
    ShiftOutOfBounds(Vec<i64>),
    #[error("probe position lies outside the probeable region")]
    ProbeOutOfBounds,
}

/// A resolved neighbor access: the package holding the value and the data
/// index inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackageDataIndex<const D: usize> {
    pub package: PackageIndex,
    pub data: [usize; D],
}

/// Values interpolatable by [`probe`].
pub trait GridValue: Copy + Send + Sync {
    fn zero() -> Self;
    fn add_scaled(self, other: Self, weight: f64) -> Self;
}

impl GridValue for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }

    #[inline]
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        self + other * weight
    }
}

impl<const D: usize> GridValue for SVector<f64, D> {
    #[inline]
    fn zero() -> Self {
        SVector::zeros()
    }

    #[inline]
    fn add_scaled(self, other: Self, weight: f64) -> Self {
        self + other * weight
    }
}

/// Value of a per-package variable at one data point.
#[inline]
pub fn value_at<T: Copy, const D: usize>(
    values: &[T],
    pkg: PackageIndex,
    data: [usize; D],
    pkg_size: usize,
) -> T {
    let block = pow(pkg_size, D);
    values[pkg as usize * block + linearize(data, [pkg_size; D])]
}

/// Resolve a shift relative to a package's origin against its neighborhood
/// table. Valid shifts span `[-pkg_size, 2*pkg_size - 1]` per component —
/// the full extent of the `3^D` neighbor block. The returned package may be
/// singular if the neighbor cell is unactivated.
#[inline]
pub fn neighbour_index_shift<const D: usize>(
    shift: [i64; D],
    neighborhood: CellNeighborhood<'_, D>,
    pkg_size: usize,
) -> PackageDataIndex<D> {
    let pkg_size = pkg_size as i64;
    let mut offset = [0usize; D];
    let mut data = [0usize; D];
    for k in 0..D {
        debug_assert!(
            (-pkg_size..2 * pkg_size).contains(&shift[k]),
            "shift component {} outside [-{pkg_size}, {}]",
            shift[k],
            2 * pkg_size - 1
        );
        let o = (shift[k] + pkg_size) / pkg_size;
        offset[k] = o as usize;
        data[k] = (shift[k] + pkg_size - o * pkg_size) as usize;
    }
    PackageDataIndex {
        package: neighborhood.at(offset),
        data,
    }
}

/// Resolve an arbitrary shift from a data point through the background
/// field. Unactivated target cells resolve to their singular far-field
/// package; cells outside the background mesh are an error.
pub fn general_shift<const D: usize>(
    mesh: &Mesh<D>,
    cell: [usize; D],
    data: [usize; D],
    shift: [i64; D],
) -> Result<PackageDataIndex<D>, StencilError> {
    let pkg_size = mesh.geometry().pkg_size() as i64;
    let mut target_cell = [0i64; D];
    let mut target_data = [0usize; D];
    for k in 0..D {
        let g = cell[k] as i64 * pkg_size + data[k] as i64 + shift[k];
        target_cell[k] = g.div_euclid(pkg_size);
        target_data[k] = g.rem_euclid(pkg_size) as usize;
    }
    let package = mesh
        .package_at(target_cell)
        .ok_or_else(|| StencilError::ShiftOutOfBounds(target_cell.to_vec()))?;
    Ok(PackageDataIndex {
        package,
        data: target_data,
    })
}

/// Multi-linear interpolation of a per-package variable at a physical
/// position. The anchor is the data point at or below `p` on every axis,
/// clamped so that all `2^D` interpolation corners stay on the grid; `p`
/// must lie at least half a data spacing inside the bounds.
pub fn probe<T: GridValue, const D: usize>(
    mesh: &Mesh<D>,
    values: &[T],
    p: Position<D>,
) -> Result<T, StencilError> {
    let geo = mesh.geometry();
    let ds = geo.data_spacing();
    let pkg_size = geo.pkg_size();
    let counts = geo.data_counts();

    let mut anchor = [0i64; D];
    let mut frac = [0.0f64; D];
    for k in 0..D {
        let u = (p[k] - geo.lower()[k]) / ds - 0.5;
        if !(-1e-12..=(counts[k] - 1) as f64 + 1e-12).contains(&u) {
            return Err(StencilError::ProbeOutOfBounds);
        }
        let a = (u.floor() as i64).clamp(0, counts[k] as i64 - 2);
        anchor[k] = a;
        frac[k] = u - a as f64;
    }

    let mut out = T::zero();
    for corner in crate::index::indices([2usize; D]) {
        let mut weight = 1.0;
        let mut cell = [0usize; D];
        let mut data = [0usize; D];
        for k in 0..D {
            weight *= if corner[k] == 1 { frac[k] } else { 1.0 - frac[k] };
            let g = anchor[k] + corner[k] as i64;
            cell[k] = (g / pkg_size as i64) as usize;
            data[k] = (g % pkg_size as i64) as usize;
        }
        let pkg = mesh
            .package_at(cell.map(|c| c as i64))
            .expect("clamped probe corner stays in bounds");
        out = out.add_scaled(value_at(values, pkg, data, pkg_size), weight);
    }
    Ok(out)
}

/// Average of the one-sided differences: plain central difference.
#[inline]
pub fn central_average(d_plus: f64, d_minus: f64) -> f64 {
    0.5 * (d_plus + d_minus)
}

/// Godunov upwind selection for a front moving with sign `sign`.
#[inline]
pub fn godunov_upwind(sign: f64) -> impl Fn(f64, f64) -> f64 {
    move |d_plus: f64, d_minus: f64| {
        if sign > 0.0 {
            f64::max(d_minus.max(0.0), -d_plus.min(0.0))
        } else {
            f64::max(-d_minus.min(0.0), d_plus.max(0.0))
        }
    }
}

/// Per-axis regularized central difference at one data point. Both
/// one-sided differences are *undivided* (no division by the data
/// spacing); `regularize` combines the forward and backward difference of
/// each axis into the returned component.
#[inline]
pub fn regularized_central_difference<const D: usize>(
    values: &[f64],
    neighborhood: CellNeighborhood<'_, D>,
    data: [usize; D],
    pkg_size: usize,
    regularize: impl Fn(f64, f64) -> f64,
) -> [f64; D] {
    let center = value_at(values, neighborhood.center(), data, pkg_size);
    let mut out = [0.0f64; D];
    let mut shift = data.map(|d| d as i64);
    for k in 0..D {
        shift[k] += 1;
        let r = neighbour_index_shift(shift, neighborhood, pkg_size);
        let plus = value_at(values, r.package, r.data, pkg_size);
        shift[k] -= 2;
        let r = neighbour_index_shift(shift, neighborhood, pkg_size);
        let minus = value_at(values, r.package, r.data, pkg_size);
        shift[k] += 1;
        out[k] = regularize(plus - center, center - minus);
    }
    out
}

/// Seven-point Laplacian at one data point of a 3-D grid, divided by the
/// squared data spacing. The axis terms accumulate in a fixed order so the
/// result is bitwise reproducible across storage backends.
#[inline]
pub fn laplacian_7pt(
    values: &[f64],
    neighborhood: CellNeighborhood<'_, 3>,
    data: [usize; 3],
    pkg_size: usize,
    data_spacing: f64,
) -> f64 {
    let center = value_at(values, neighborhood.center(), data, pkg_size);
    let mut sum = 0.0;
    let mut shift = data.map(|d| d as i64);
    for k in 0..3 {
        shift[k] -= 1;
        let r = neighbour_index_shift(shift, neighborhood, pkg_size);
        let minus = value_at(values, r.package, r.data, pkg_size);
        shift[k] += 2;
        let r = neighbour_index_shift(shift, neighborhood, pkg_size);
        let plus = value_at(values, r.package, r.data, pkg_size);
        shift[k] -= 1;
        sum += minus + plus;
    }
    (sum - 6.0 * center) / (data_spacing * data_spacing)
}
