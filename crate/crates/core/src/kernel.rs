//! Compactly supported smoothing kernel and the smoothed Heaviside step.

use std::f64::consts::PI;

use nalgebra::SVector;

/// Wendland C2 kernel with support radius `2h`, normalized to unit volume
/// integral in 2-D and 3-D.
#[derive(Debug, Clone, Copy)]
pub struct SmoothingKernel<const D: usize> {
    h: f64,
    alpha: f64,
}

impl<const D: usize> SmoothingKernel<D> {
    pub fn new(h: f64) -> Self {
        assert!(h > 0.0 && h.is_finite());
        let alpha = match D {
            2 => 7.0 / (4.0 * PI * h * h),
            3 => 21.0 / (16.0 * PI * h * h * h),
            _ => panic!("smoothing kernel only normalized for 2 or 3 dimensions"),
        };
        Self { h, alpha }
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn support_radius(&self) -> f64 {
        2.0 * self.h
    }

    /// Kernel value at distance `r`.
    #[inline]
    pub fn w(&self, r: f64) -> f64 {
        let q = r / self.h;
        if q >= 2.0 {
            return 0.0;
        }
        let s = 1.0 - 0.5 * q;
        let s2 = s * s;
        self.alpha * s2 * s2 * (1.0 + 2.0 * q)
    }

    /// Radial derivative `dW/dr`; non-positive everywhere.
    #[inline]
    pub fn dw_dr(&self, r: f64) -> f64 {
        let q = r / self.h;
        if q >= 2.0 {
            return 0.0;
        }
        let s = 1.0 - 0.5 * q;
        self.alpha * (-5.0 * q) * s * s * s / self.h
    }

    /// Gradient of `W(|x|)` with respect to `x`, evaluated at `x = rvec`.
    #[inline]
    pub fn grad_w(&self, rvec: SVector<f64, D>) -> SVector<f64, D> {
        let r = rvec.norm();
        if r < 1e-12 * self.h {
            return SVector::zeros();
        }
        rvec * (self.dw_dr(r) / r)
    }
}

/// Smoothed Heaviside step of half-width `eps`: 0 below `-eps`, 1 above
/// `+eps`, with a sine-eased ramp in between.
#[inline]
pub fn smoothed_heaviside(u: f64, eps: f64) -> f64 {
    if u < -eps {
        0.0
    } else if u > eps {
        1.0
    } else {
        0.5 * (1.0 + u / eps + (PI * u / eps).sin() / PI)
    }
}
