//! Multi-dimensional index arithmetic shared by the grid types.
//!
//! Cells and in-package data points are both addressed by `[usize; D]`
//! tuples and linearized in row-major order (last axis fastest), so the
//! same helpers serve background cells, data points and stencil offsets.

/// `base^exp` for small index math (`3^D`, `pkg_size^D`, ...).
#[inline]
pub const fn pow(base: usize, exp: usize) -> usize {
    let mut out = 1;
    let mut i = 0;
    while i < exp {
        out *= base;
        i += 1;
    }
    out
}

/// Row-major linear index of `idx` within an array of extent `dims`.
#[inline]
pub fn linearize<const D: usize>(idx: [usize; D], dims: [usize; D]) -> usize {
    let mut lin = 0;
    for k in 0..D {
        debug_assert!(idx[k] < dims[k]);
        lin = lin * dims[k] + idx[k];
    }
    lin
}

/// Inverse of [`linearize`].
#[inline]
pub fn delinearize<const D: usize>(mut lin: usize, dims: [usize; D]) -> [usize; D] {
    let mut idx = [0usize; D];
    let mut k = D;
    while k > 0 {
        k -= 1;
        idx[k] = lin % dims[k];
        lin /= dims[k];
    }
    idx
}

/// Iterates all indices in `[0, dims)` in row-major order.
pub fn indices<const D: usize>(dims: [usize; D]) -> MultiIndexIter<D> {
    MultiIndexIter {
        dims,
        next: Some([0; D]),
    }
    .skip_empty()
}

/// Row-major iterator over a rectangular index range.
pub struct MultiIndexIter<const D: usize> {
    dims: [usize; D],
    next: Option<[usize; D]>,
}

impl<const D: usize> MultiIndexIter<D> {
    fn skip_empty(mut self) -> Self {
        if self.dims.iter().any(|&n| n == 0) {
            self.next = None;
        }
        self
    }
}

impl<const D: usize> Iterator for MultiIndexIter<D> {
    type Item = [usize; D];

    fn next(&mut self) -> Option<[usize; D]> {
        let current = self.next?;
        let mut succ = current;
        let mut k = D;
        loop {
            if k == 0 {
                self.next = None;
                break;
            }
            k -= 1;
            succ[k] += 1;
            if succ[k] < self.dims[k] {
                self.next = Some(succ);
                break;
            }
            succ[k] = 0;
        }
        Some(current)
    }
}

/// All `3^D` neighborhood offsets in `{0, 1, 2}^D`, row-major; offset
/// `[1; D]` is the owning cell itself.
pub fn neighborhood_offsets<const D: usize>() -> MultiIndexIter<D> {
    indices([3; D])
}

/// Linear slot of a `{0, 1, 2}^D` neighborhood offset.
#[inline]
pub fn neighborhood_slot<const D: usize>(offset: [usize; D]) -> usize {
    linearize(offset, [3; D])
}
