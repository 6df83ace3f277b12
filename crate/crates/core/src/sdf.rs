//! Signed-distance fields used to drive band activation and level-set
//! evaluation. Closed shapes report negative values inside.

use crate::geometry::Position;

/// A signed-distance source. Implementations must be thread-safe: the
/// evaluation sweeps call into the field from parallel kernels.
pub trait SignedDistance<const D: usize>: Sync {
    /// Signed distance from `p` to the surface; negative inside.
    fn signed_distance(&self, p: Position<D>) -> f64;

    /// Unsigned distance; override when cheaper than `signed_distance`.
    fn distance(&self, p: Position<D>) -> f64 {
        self.signed_distance(p).abs()
    }
}

impl<const D: usize, S: SignedDistance<D> + ?Sized> SignedDistance<D> for &S {
    fn signed_distance(&self, p: Position<D>) -> f64 {
        (**self).signed_distance(p)
    }

    fn distance(&self, p: Position<D>) -> f64 {
        (**self).distance(p)
    }
}

/// Solid ball.
#[derive(Debug, Clone, Copy)]
pub struct Sphere<const D: usize> {
    pub center: Position<D>,
    pub radius: f64,
}

impl<const D: usize> SignedDistance<D> for Sphere<D> {
    #[inline]
    fn signed_distance(&self, p: Position<D>) -> f64 {
        (p - self.center).norm() - self.radius
    }
}

/// Solid shell between two concentric spheres.
#[derive(Debug, Clone, Copy)]
pub struct SphericalShell<const D: usize> {
    pub center: Position<D>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl<const D: usize> SignedDistance<D> for SphericalShell<D> {
    #[inline]
    fn signed_distance(&self, p: Position<D>) -> f64 {
        let rho = (p - self.center).norm();
        (self.inner_radius - rho).max(rho - self.outer_radius)
    }
}

/// Half space `dot(normal, p) <= offset`; `normal` must be unit length.
#[derive(Debug, Clone, Copy)]
pub struct HalfSpace<const D: usize> {
    pub normal: Position<D>,
    pub offset: f64,
}

impl<const D: usize> SignedDistance<D> for HalfSpace<D> {
    #[inline]
    fn signed_distance(&self, p: Position<D>) -> f64 {
        self.normal.dot(&p) - self.offset
    }
}

/// Axis-aligned solid box.
#[derive(Debug, Clone, Copy)]
pub struct AxisBox<const D: usize> {
    pub min: Position<D>,
    pub max: Position<D>,
}

impl<const D: usize> SignedDistance<D> for AxisBox<D> {
    fn signed_distance(&self, p: Position<D>) -> f64 {
        let mut outside_sq = 0.0;
        let mut inside = f64::NEG_INFINITY;
        for k in 0..D {
            let q = (self.min[k] - p[k]).max(p[k] - self.max[k]);
            if q > 0.0 {
                outside_sq += q * q;
            } else {
                inside = inside.max(q);
            }
        }
        if outside_sq > 0.0 {
            outside_sq.sqrt()
        } else {
            inside
        }
    }
}

/// Boolean union of two solids (minimum of the fields). Exact on the
/// outside; a conservative bound inside, which the reinitialization sweep
/// restores to a distance field.
#[derive(Debug, Clone, Copy)]
pub struct Union<A, B>(pub A, pub B);

impl<const D: usize, A: SignedDistance<D>, B: SignedDistance<D>> SignedDistance<D>
    for Union<A, B>
{
    #[inline]
    fn signed_distance(&self, p: Position<D>) -> f64 {
        self.0.signed_distance(p).min(self.1.signed_distance(p))
    }
}
