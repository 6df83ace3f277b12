//! Small shared utilities.

use std::cell::UnsafeCell;

/// A slice wrapper that allows scattered writes from multiple threads.
///
/// Loop drivers hand kernels a plain `Fn(index)`, so kernels that scatter
/// into an output array cannot hold `&mut` exclusively. This wrapper makes
/// such writes possible; *callers* guarantee that no element is written by
/// two kernel invocations and that no element is read while written. All
/// pipeline sweeps uphold this by writing only state owned by the visited
/// package (double-buffering any neighbor reads).
pub struct UnsafeSlice<'a, T> {
    slice: &'a [UnsafeCell<T>],
}

unsafe impl<'a, T: Send + Sync> Send for UnsafeSlice<'a, T> {}
unsafe impl<'a, T: Send + Sync> Sync for UnsafeSlice<'a, T> {}

impl<'a, T> UnsafeSlice<'a, T> {
    pub fn new(slice: &'a mut [T]) -> Self {
        let ptr = slice as *mut [T] as *const [UnsafeCell<T>];
        Self {
            // SAFETY: UnsafeCell<T> has the same layout as T.
            slice: unsafe { &*ptr },
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.slice.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.slice.is_empty()
    }

    /// Write one element.
    ///
    /// # Safety
    /// No concurrent read of or write to index `i`.
    #[inline]
    pub unsafe fn write(&self, i: usize, value: T) {
        *self.slice[i].get() = value;
    }

    /// Read one element.
    ///
    /// # Safety
    /// No concurrent write to index `i`.
    #[inline]
    pub unsafe fn read(&self, i: usize) -> T
    where
        T: Copy,
    {
        *self.slice[i].get()
    }
}
