//! Background-grid geometry: physical bounds, cell layout and the
//! cell/data-point coordinate transforms.

use nalgebra::SVector;
use thiserror::Error;

use crate::index::{linearize, pow};

/// A point or vector in physical space.
pub type Position<const D: usize> = SVector<f64, D>;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coarse cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("package size must be at least 2, got {0}")]
    InvalidPackageSize(usize),
    #[error("cell count must be positive on every axis")]
    EmptyExtent,
    #[error("position {0:?} is outside the grid bounds")]
    PositionOutOfBounds(Vec<f64>),
}

/// Geometry of one background mesh: a box anchored at `lower`, split into
/// `cells_per_axis` coarse cells of edge length `coarse_cell_size`, each
/// subdivided into `pkg_size^D` data points.
///
/// `data_spacing` is always derived as `coarse_cell_size / pkg_size` so the
/// two spacings can never drift apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry<const D: usize> {
    lower: Position<D>,
    coarse_cell_size: f64,
    cells_per_axis: [usize; D],
    pkg_size: usize,
    data_spacing: f64,
}

impl<const D: usize> GridGeometry<D> {
    pub fn new(
        lower: Position<D>,
        coarse_cell_size: f64,
        cells_per_axis: [usize; D],
        pkg_size: usize,
    ) -> Result<Self, GeometryError> {
        if !(coarse_cell_size > 0.0 && coarse_cell_size.is_finite()) {
            return Err(GeometryError::InvalidCellSize(coarse_cell_size));
        }
        if pkg_size < 2 {
            return Err(GeometryError::InvalidPackageSize(pkg_size));
        }
        if cells_per_axis.iter().any(|&n| n == 0) {
            return Err(GeometryError::EmptyExtent);
        }
        Ok(Self {
            lower,
            coarse_cell_size,
            cells_per_axis,
            pkg_size,
            data_spacing: coarse_cell_size / pkg_size as f64,
        })
    }

    #[inline]
    pub fn lower(&self) -> Position<D> {
        self.lower
    }

    #[inline]
    pub fn coarse_cell_size(&self) -> f64 {
        self.coarse_cell_size
    }

    #[inline]
    pub fn data_spacing(&self) -> f64 {
        self.data_spacing
    }

    #[inline]
    pub fn cells_per_axis(&self) -> [usize; D] {
        self.cells_per_axis
    }

    #[inline]
    pub fn pkg_size(&self) -> usize {
        self.pkg_size
    }

    /// Total number of background cells.
    #[inline]
    pub fn cell_count(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    /// Number of data points held by one package (`pkg_size^D`).
    #[inline]
    pub fn block_len(&self) -> usize {
        pow(self.pkg_size, D)
    }

    /// Number of neighborhood slots per cell (`3^D`).
    #[inline]
    pub fn neighborhood_len(&self) -> usize {
        pow(3, D)
    }

    /// Data points per axis over the whole grid.
    #[inline]
    pub fn data_counts(&self) -> [usize; D] {
        let mut out = self.cells_per_axis;
        for n in &mut out {
            *n *= self.pkg_size;
        }
        out
    }

    #[inline]
    pub fn upper(&self) -> Position<D> {
        self.lower + self.extent()
    }

    #[inline]
    pub fn extent(&self) -> Position<D> {
        Position::<D>::from_fn(|k, _| self.cells_per_axis[k] as f64 * self.coarse_cell_size)
    }

    #[inline]
    pub fn cell_in_bounds(&self, cell: [i64; D]) -> bool {
        (0..D).all(|k| cell[k] >= 0 && (cell[k] as usize) < self.cells_per_axis[k])
    }

    #[inline]
    pub fn linear_cell_index(&self, cell: [usize; D]) -> usize {
        linearize(cell, self.cells_per_axis)
    }

    /// Center of a background cell.
    #[inline]
    pub fn cell_center(&self, cell: [i64; D]) -> Position<D> {
        Position::<D>::from_fn(|k, _| {
            self.lower[k] + (cell[k] as f64 + 0.5) * self.coarse_cell_size
        })
    }

    /// Lower corner of a background cell.
    #[inline]
    pub fn cell_lower(&self, cell: [usize; D]) -> Position<D> {
        Position::<D>::from_fn(|k, _| self.lower[k] + cell[k] as f64 * self.coarse_cell_size)
    }

    /// Physical position of the data point `data` inside cell `cell`.
    /// Data points sit at cell-local offsets `(data + 0.5) * data_spacing`.
    #[inline]
    pub fn data_point_position(&self, cell: [usize; D], data: [usize; D]) -> Position<D> {
        Position::<D>::from_fn(|k, _| {
            self.lower[k]
                + cell[k] as f64 * self.coarse_cell_size
                + (data[k] as f64 + 0.5) * self.data_spacing
        })
    }

    /// Position of a data point given in grid-global data coordinates.
    #[inline]
    pub fn global_data_position(&self, global: [i64; D]) -> Position<D> {
        Position::<D>::from_fn(|k, _| {
            self.lower[k] + (global[k] as f64 + 0.5) * self.data_spacing
        })
    }

    /// Cell and in-package data index of the data sub-cell containing `p`.
    /// Positions exactly on a sub-cell boundary resolve to the higher cell.
    pub fn position_to_indices(
        &self,
        p: Position<D>,
    ) -> Result<([usize; D], [usize; D]), GeometryError> {
        let mut cell = [0usize; D];
        let mut data = [0usize; D];
        for k in 0..D {
            let rel = p[k] - self.lower[k];
            let extent = self.cells_per_axis[k] as f64 * self.coarse_cell_size;
            if !(0.0..extent).contains(&rel) {
                return Err(GeometryError::PositionOutOfBounds(
                    p.iter().copied().collect(),
                ));
            }
            let g = (rel / self.data_spacing).floor() as usize;
            // Guard against rel/data_spacing rounding up to the extent.
            let g = g.min(self.cells_per_axis[k] * self.pkg_size - 1);
            cell[k] = g / self.pkg_size;
            data[k] = g % self.pkg_size;
        }
        Ok((cell, data))
    }

    /// True if `p` lies inside the box covered by the grid.
    pub fn contains(&self, p: Position<D>) -> bool {
        (0..D).all(|k| {
            let rel = p[k] - self.lower[k];
            (0.0..self.cells_per_axis[k] as f64 * self.coarse_cell_size).contains(&rel)
        })
    }
}
