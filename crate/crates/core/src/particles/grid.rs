//! Uniform cell-linked list for near-neighbor queries.

use crate::geometry::Position;
use crate::index::{indices, linearize};

/// Particle indices bucketed on a uniform grid whose cell edge is at least
/// the interaction radius, so every interacting pair lives in adjacent
/// buckets. Buckets keep insertion order and neighbor queries scan the
/// `3^D` surrounding buckets in a fixed lexicographic order — force sums
/// accumulated through [`BucketGrid::for_each_neighbor`] are therefore
/// reproducible regardless of the execution policy.
pub(super) struct BucketGrid<const D: usize> {
    origin: Position<D>,
    cell: f64,
    dims: [usize; D],
    buckets: Vec<Vec<u32>>,
}

impl<const D: usize> BucketGrid<D> {
    pub fn build(positions: &[Position<D>], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite());
        let mut origin = Position::<D>::zeros();
        let mut dims = [1usize; D];
        if !positions.is_empty() {
            let mut upper = positions[0];
            origin = positions[0];
            for p in positions {
                for k in 0..D {
                    origin[k] = origin[k].min(p[k]);
                    upper[k] = upper[k].max(p[k]);
                }
            }
            for k in 0..D {
                dims[k] = ((upper[k] - origin[k]) / cell) as usize + 1;
            }
        }
        let mut grid = BucketGrid {
            origin,
            cell,
            dims,
            buckets: vec![Vec::new(); dims.iter().product()],
        };
        for (i, p) in positions.iter().enumerate() {
            let b = grid.bucket_of(p);
            grid.buckets[linearize(b, grid.dims)].push(i as u32);
        }
        grid
    }

    fn bucket_of(&self, p: &Position<D>) -> [usize; D] {
        let mut b = [0usize; D];
        for k in 0..D {
            let f = ((p[k] - self.origin[k]) / self.cell).floor();
            b[k] = (f.max(0.0) as usize).min(self.dims[k] - 1);
        }
        b
    }

    /// Visit every particle index whose bucket touches the one holding
    /// `p`, in a fixed order. The caller filters by actual distance.
    pub fn for_each_neighbor(&self, p: &Position<D>, mut visit: impl FnMut(usize)) {
        let base = self.bucket_of(p);
        for offset in indices([3; D]) {
            let mut b = [0usize; D];
            let mut in_range = true;
            for k in 0..D {
                match (base[k] + offset[k]).checked_sub(1) {
                    Some(c) if c < self.dims[k] => b[k] = c,
                    _ => in_range = false,
                }
            }
            if !in_range {
                continue;
            }
            for &j in &self.buckets[linearize(b, self.dims)] {
                visit(j as usize);
            }
        }
    }
}
