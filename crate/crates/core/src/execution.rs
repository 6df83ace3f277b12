//! Execution policies and the loop drivers that run per-cell / per-package
//! kernels under them.
//!
//! Compute kernels are plain `Fn(index)` closures capturing value-copyable
//! state and variable views. The same kernel runs unchanged under every
//! policy; only the driver changes. Parallel loops hand out contiguous
//! index chunks, so two packages are never visited by the same invocation
//! twice and writes stay race-free as long as a kernel only writes state
//! owned by its own index (the double-buffering rule for neighbor reads).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::index::delinearize;
use crate::mesh::{MetaCell, PackageCategory};

/// Where and how a loop executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionPolicy {
    /// Single-threaded reference execution.
    Sequential,
    /// Work-sharing across host threads; `threads == 0` uses the global
    /// thread pool, any other value runs on a dedicated pool of that size.
    ParallelHost { threads: usize },
    /// In-process accelerator stand-in: kernels run on the host, but
    /// delegated variables live in a separate device-side buffer and copy
    /// traffic is instrumented (see [`crate::variable::MeshVariable`]).
    DeviceStub,
}

impl ExecutionPolicy {
    /// Parallel execution on the global thread pool.
    pub const fn parallel() -> Self {
        ExecutionPolicy::ParallelHost { threads: 0 }
    }

    pub const fn is_device(self) -> bool {
        matches!(self, ExecutionPolicy::DeviceStub)
    }
}

/// A rectangular range of cell indices, `lower` inclusive / `upper`
/// exclusive per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange<const D: usize> {
    pub lower: [usize; D],
    pub upper: [usize; D],
}

impl<const D: usize> CellRange<D> {
    pub fn full(dims: [usize; D]) -> Self {
        Self {
            lower: [0; D],
            upper: dims,
        }
    }

    pub fn extent(&self) -> [usize; D] {
        let mut out = [0; D];
        for k in 0..D {
            out[k] = self.upper[k].saturating_sub(self.lower[k]);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.extent().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cell_at(&self, lin: usize) -> [usize; D] {
        let mut cell = delinearize(lin, self.extent());
        for k in 0..D {
            cell[k] += self.lower[k];
        }
        cell
    }
}

fn dedicated_pool(threads: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut pools = pools.lock().unwrap();
    pools
        .entry(threads)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("thread pool construction"),
            )
        })
        .clone()
}

/// Run `kernel` for every index in `[0, len)` under `policy`.
pub fn for_each_index(policy: ExecutionPolicy, len: usize, kernel: impl Fn(usize) + Sync) {
    match policy {
        ExecutionPolicy::Sequential | ExecutionPolicy::DeviceStub => {
            (0..len).for_each(kernel);
        }
        ExecutionPolicy::ParallelHost { threads } => {
            let workers = if threads == 0 {
                rayon::current_num_threads()
            } else {
                threads
            };
            let chunk = (len / (8 * workers)).max(1);
            let run = || {
                (0..len)
                    .into_par_iter()
                    .with_min_len(chunk)
                    .for_each(&kernel)
            };
            if threads == 0 {
                run();
            } else {
                dedicated_pool(threads).install(run);
            }
        }
    }
}

/// Run `kernel` for every cell index in `range`.
pub fn for_each_cell<const D: usize>(
    policy: ExecutionPolicy,
    range: CellRange<D>,
    kernel: impl Fn([usize; D]) + Sync,
) {
    for_each_index(policy, range.len(), |lin| kernel(range.cell_at(lin)));
}

/// Run `kernel` for every activated package of the given category. The two
/// singular packages are never visited.
pub fn for_each_package(
    policy: ExecutionPolicy,
    meta: &[MetaCell],
    category: PackageCategory,
    kernel: impl Fn(usize) + Sync,
) {
    for_each_package_with(policy, meta, Some(category), || kernel)
}

/// Run `kernel` for every activated package regardless of category.
pub fn for_each_band_package(
    policy: ExecutionPolicy,
    meta: &[MetaCell],
    kernel: impl Fn(usize) + Sync,
) {
    for_each_package_with(policy, meta, None, || kernel)
}

/// Package loop with a lazily built kernel: `make_kernel` (which typically
/// acquires variable views and may trigger device migration) only runs if
/// at least one package matches the filter.
pub fn for_each_package_with<K: Fn(usize) + Sync>(
    policy: ExecutionPolicy,
    meta: &[MetaCell],
    category: Option<PackageCategory>,
    make_kernel: impl FnOnce() -> K,
) {
    let matching: Vec<usize> = meta
        .iter()
        .enumerate()
        .skip(crate::mesh::SINGULAR_PACKAGES)
        .filter(|(_, m)| category.map_or(true, |c| m.category == c))
        .map(|(p, _)| p)
        .collect();
    if matching.is_empty() {
        return;
    }
    let kernel = make_kernel();
    for_each_index(policy, matching.len(), |i| kernel(matching[i]));
}
