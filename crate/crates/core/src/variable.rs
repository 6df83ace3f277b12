//! Discrete variable storage.
//!
//! A [`MeshVariable`] is a cheaply clonable handle onto one contiguous
//! value array. The handle also owns the (stub) accelerator residency of
//! the array: requesting a view through [`MeshVariable::delegated`] with a
//! device policy lazily copies the data into a second, device-side buffer
//! and instruments the copy traffic, mimicking a host/accelerator runtime
//! without an actual accelerator. Host-side policies always see the host
//! buffer directly.

use std::any::Any;
use std::sync::Arc;

use parking_lot::{
    MappedRwLockReadGuard, MappedRwLockWriteGuard, RwLock, RwLockReadGuard, RwLockWriteGuard,
};

use crate::execution::ExecutionPolicy;

/// Types storable in a variable array.
pub trait VarValue: Copy + Send + Sync + 'static {
    /// Fill value for newly allocated entries.
    fn zeroed() -> Self;
}

macro_rules! zeroed_by_default {
    ($($t:ty),*) => {$(
        impl VarValue for $t {
            fn zeroed() -> Self {
                Self::default()
            }
        }
    )*};
}
zeroed_by_default!(f32, f64, i8, i16, i32, i64, u8, u16, u32, u64, usize, bool);

impl<const D: usize> VarValue for nalgebra::SVector<f64, D> {
    fn zeroed() -> Self {
        Self::zeros()
    }
}

/// Copy traffic between the host array and the stub device array.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MigrationStats {
    pub to_device: usize,
    pub to_host: usize,
}

struct Store<T> {
    host: Vec<T>,
    device: Option<Vec<T>>,
    /// Device buffer holds writes not yet copied back to the host.
    device_dirty: bool,
    stats: MigrationStats,
}

/// Shared read view; derefs to the value slice.
pub type VarRead<'a, T> = MappedRwLockReadGuard<'a, [T]>;
/// Exclusive write view; derefs to the mutable value slice.
pub type VarWrite<'a, T> = MappedRwLockWriteGuard<'a, [T]>;

/// Handle to one named, contiguous value array. Clones refer to the same
/// storage; a handle stays valid across package reallocation.
pub struct MeshVariable<T: VarValue> {
    name: Arc<str>,
    store: Arc<RwLock<Store<T>>>,
}

impl<T: VarValue> Clone for MeshVariable<T> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            store: self.store.clone(),
        }
    }
}

impl<T: VarValue> MeshVariable<T> {
    pub(crate) fn new(name: &str, len: usize) -> Self {
        Self {
            name: Arc::from(name),
            store: Arc::new(RwLock::new(Store {
                host: vec![T::zeroed(); len],
                device: None,
                device_dirty: false,
                stats: MigrationStats::default(),
            })),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.store.read().host.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Host-side read view.
    pub fn read(&self) -> VarRead<'_, T> {
        RwLockReadGuard::map(self.store.read(), |s| s.host.as_slice())
    }

    /// Host-side write view. Host writes supersede any device copy, so the
    /// device residency is dropped.
    pub fn write(&self) -> VarWrite<'_, T> {
        let mut guard = self.store.write();
        guard.device = None;
        guard.device_dirty = false;
        RwLockWriteGuard::map(guard, |s| s.host.as_mut_slice())
    }

    /// Read view of the array as seen by `policy`. A device policy lazily
    /// migrates the host data on first request; repeated requests reuse
    /// the resident copy.
    pub fn delegated(&self, policy: ExecutionPolicy) -> VarRead<'_, T> {
        if !policy.is_device() {
            return self.read();
        }
        let guard = self.ensure_device();
        RwLockReadGuard::map(RwLockWriteGuard::downgrade(guard), |s| {
            s.device.as_deref().unwrap()
        })
    }

    /// Write view of the array as seen by `policy`. Device writes land in
    /// the resident copy and must be fetched with
    /// [`MeshVariable::synchronize_to_host`] before the host sees them.
    pub fn delegated_mut(&self, policy: ExecutionPolicy) -> VarWrite<'_, T> {
        if !policy.is_device() {
            return self.write();
        }
        let mut guard = self.ensure_device();
        guard.device_dirty = true;
        RwLockWriteGuard::map(guard, |s| s.device.as_deref_mut().unwrap())
    }

    fn ensure_device(&self) -> RwLockWriteGuard<'_, Store<T>> {
        let mut guard = self.store.write();
        if guard.device.is_none() {
            let copy = guard.host.clone();
            guard.device = Some(copy);
            guard.stats.to_device += 1;
        }
        guard
    }

    pub fn migration_stats(&self) -> MigrationStats {
        self.store.read().stats
    }

    /// Fill every entry with `value` (host side).
    pub fn fill(&self, value: T) {
        self.write().fill(value);
    }

    pub(crate) fn resize_len(&self, new_len: usize) {
        let mut guard = self.store.write();
        guard.device = None;
        guard.device_dirty = false;
        guard.host.resize(new_len, T::zeroed());
    }

    /// Exact bytes held by the host value array.
    pub fn host_bytes(&self) -> usize {
        self.len() * std::mem::size_of::<T>()
    }
}

/// Variables that may hold a stub device residency; used to synchronize a
/// heterogeneous set of output variables in one call.
pub trait DeviceResident {
    /// Copy device-side writes back into the host array, if any.
    fn synchronize_to_host(&self);
}

impl<T: VarValue> DeviceResident for MeshVariable<T> {
    fn synchronize_to_host(&self) {
        let mut guard = self.store.write();
        if guard.device_dirty {
            let device = guard.device.take().unwrap();
            guard.host.copy_from_slice(&device);
            guard.device = Some(device);
            guard.device_dirty = false;
            guard.stats.to_host += 1;
        }
    }
}

/// Copy back every variable in `vars`. Variables not listed keep their
/// host copies stale — synchronization is deliberately explicit.
pub fn synchronize_to_host(vars: &[&dyn DeviceResident]) {
    for v in vars {
        v.synchronize_to_host();
    }
}

/// Type-erased registry entry.
pub(crate) trait AnyVariable: Send + Sync {
    fn as_any(&self) -> &dyn Any;
    fn resize_entries(&self, new_len: usize);
    fn host_bytes(&self) -> usize;
}

impl<T: VarValue> AnyVariable for MeshVariable<T> {
    fn as_any(&self) -> &dyn Any {
        self
    }

    fn resize_entries(&self, new_len: usize) {
        self.resize_len(new_len);
    }

    fn host_bytes(&self) -> usize {
        MeshVariable::host_bytes(self)
    }
}
