//! Storage backends for the benchmark harness.
//!
//! All three backends hold the same narrow band — the activated cells of a
//! level-set layer with two value arrays `a` (seeded from φ) and `b` — and
//! run the same two workloads over the same activated points:
//!
//! * `add_one`: `a += 1` at every active data point (bandwidth-bound);
//! * `laplacian`: seven-point Laplacian of `a` into `b` (stencil-bound).
//!
//! Off-band taps resolve to the far-field constants (±10⁴ cell sizes,
//! signed per cell by the background field), whichever backend serves
//! them, and every backend accumulates the stencil in the same order, so
//! the checksums must match bitwise across backends; the harness treats
//! any difference as an indexing bug.

use std::collections::HashMap;

use pkggrid::execution::{for_each_band_package, for_each_index};
use pkggrid::index::{delinearize, indices, linearize, pow};
use pkggrid::mesh::SINGULAR_PACKAGES;
use pkggrid::stencil::laplacian_7pt;
use pkggrid::util::UnsafeSlice;
use pkggrid::{CellNeighborhood, ExecutionPolicy, LevelSetLayer};

/// One storage strategy under test.
pub trait GridBackend {
    fn name(&self) -> &'static str;
    /// `a += 1` at every active data point.
    fn add_one(&mut self, policy: ExecutionPolicy);
    /// `b = ∇²a` at every active data point.
    fn laplacian(&mut self, policy: ExecutionPolicy);
    /// XOR of the raw bits of (`a`, `b`) over active points, package order.
    fn checksums(&self) -> (u64, u64);
    /// Σ a over active points, fixed order.
    fn sum(&self) -> f64;
    /// Active data points.
    fn active_points(&self) -> usize;
    /// Allocation beyond the active values themselves (index structures,
    /// far-field storage, dense padding), per active data point.
    fn overhead_bytes_per_point(&self) -> f64;
}

fn xor_bits(values: &[f64]) -> u64 {
    values.iter().fold(0, |acc, v| acc ^ v.to_bits())
}

/// The library's package layout: values stay in flat per-package blocks
/// and cross-package taps go through the precomputed neighborhood table.
pub struct PackageBackend {
    layer: LevelSetLayer<3>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PackageBackend {
    pub fn new(layer: LevelSetLayer<3>) -> Self {
        let a = layer.phi.read().to_vec();
        let b = vec![0.0; a.len()];
        PackageBackend { layer, a, b }
    }

    fn active_block_range(&self, pkg: usize) -> std::ops::Range<usize> {
        let block = self.layer.mesh.block_len();
        pkg * block..(pkg + 1) * block
    }
}

impl GridBackend for PackageBackend {
    fn name(&self) -> &'static str {
        "package"
    }

    fn add_one(&mut self, policy: ExecutionPolicy) {
        let block = self.layer.mesh.block_len();
        let meta = self.layer.mesh.meta();
        let out = UnsafeSlice::new(&mut self.a);
        for_each_band_package(policy, meta, |pkg| {
            for idx in pkg * block..(pkg + 1) * block {
                // Packages are disjoint across iterations.
                unsafe { out.write(idx, out.read(idx) + 1.0) };
            }
        });
    }

    fn laplacian(&mut self, policy: ExecutionPolicy) {
        let mesh = &self.layer.mesh;
        let geo = mesh.geometry();
        let ds = geo.data_spacing();
        let pkg_size = geo.pkg_size();
        let block = geo.block_len();
        let stride = pow(3, 3);
        let meta = mesh.meta();
        let neighborhoods = mesh.neighborhoods();
        let a = &self.a;
        let out = UnsafeSlice::new(&mut self.b);
        for_each_band_package(policy, meta, |pkg| {
            let nbhd =
                CellNeighborhood::<3>(&neighborhoods[pkg * stride..(pkg + 1) * stride]);
            for data in indices([pkg_size; 3]) {
                let idx = pkg * block + linearize(data, [pkg_size; 3]);
                let value = laplacian_7pt(a, nbhd, data, pkg_size, ds);
                // Packages are disjoint across iterations.
                unsafe { out.write(idx, value) };
            }
        });
    }

    fn checksums(&self) -> (u64, u64) {
        let start = self.active_block_range(SINGULAR_PACKAGES).start;
        (xor_bits(&self.a[start..]), xor_bits(&self.b[start..]))
    }

    fn sum(&self) -> f64 {
        let start = self.active_block_range(SINGULAR_PACKAGES).start;
        self.a[start..].iter().sum()
    }

    fn active_points(&self) -> usize {
        self.layer.mesh.activated_packages() * self.layer.mesh.block_len()
    }

    fn overhead_bytes_per_point(&self) -> f64 {
        let mesh = &self.layer.mesh;
        let audit = mesh.audit();
        let topology = audit.neighborhood_bytes + audit.meta_bytes;
        let singular_values = 2 * SINGULAR_PACKAGES * mesh.block_len() * 8;
        (topology + singular_values) as f64 / self.active_points() as f64
    }
}

/// Dense mirror: one value per data point of the full bounding lattice,
/// directly addressed. Unactivated points are prefilled with the signed
/// far-field constant so stencil taps read the same values the package
/// backend serves from its singular blocks.
pub struct DenseBackend {
    counts: [usize; 3],
    pkg_size: usize,
    ds: f64,
    /// Global data coordinates of each active cell's block origin,
    /// package order.
    origins: Vec<[usize; 3]>,
    a: Vec<f64>,
    b: Vec<f64>,
    active: usize,
}

/// True when every activated cell keeps one unactivated cell between
/// itself and the domain boundary. The flat backends require this:
/// stencil taps from a boundary-touching band would leave the bounding
/// lattice, which the package backend serves from its wired far-field
/// slots but dense and hashed storage cannot mirror.
pub fn band_is_detached(layer: &LevelSetLayer<3>) -> bool {
    let cells = layer.mesh.geometry().cells_per_axis();
    layer.mesh.meta()[SINGULAR_PACKAGES..].iter().all(|meta| {
        let cell = delinearize(meta.linear_cell as usize, cells);
        (0..3).all(|k| cell[k] >= 1 && cell[k] + 2 <= cells[k])
    })
}

fn assert_band_detached(layer: &LevelSetLayer<3>) {
    assert!(
        band_is_detached(layer),
        "an activated cell touches the domain boundary; flat backends need a detached band"
    );
}

impl DenseBackend {
    pub fn new(layer: &LevelSetLayer<3>) -> Self {
        assert_band_detached(layer);
        let mesh = &layer.mesh;
        let geo = mesh.geometry();
        let cells = geo.cells_per_axis();
        let counts = geo.data_counts();
        let pkg_size = geo.pkg_size();
        let block = geo.block_len();
        let total = counts[0] * counts[1] * counts[2];
        let large = layer.large_value();
        let phi = layer.phi.read();

        // Far-field prefill, then copy the activated blocks over it.
        let mut a = vec![0.0; total];
        for cell in indices(cells) {
            let word = mesh.background_value(linearize(cell, cells));
            let fill = match word as usize {
                0 => -large,
                1 => large,
                _ => continue,
            };
            for data in indices([pkg_size; 3]) {
                a[Self::global_index(counts, cells_origin(cell, pkg_size), data)] = fill;
            }
        }
        let mut origins = Vec::with_capacity(mesh.activated_packages());
        for meta in &mesh.meta()[SINGULAR_PACKAGES..] {
            let cell = delinearize(meta.linear_cell as usize, cells);
            let origin = cells_origin(cell, pkg_size);
            let pkg = mesh.background_value(meta.linear_cell as usize) as usize;
            for data in indices([pkg_size; 3]) {
                a[Self::global_index(counts, origin, data)] =
                    phi[pkg * block + linearize(data, [pkg_size; 3])];
            }
            origins.push(origin);
        }
        let b = vec![0.0; total];
        let active = origins.len() * block;
        DenseBackend {
            counts,
            pkg_size,
            ds: geo.data_spacing(),
            origins,
            a,
            b,
            active,
        }
    }

    #[inline]
    fn global_index(counts: [usize; 3], origin: [usize; 3], data: [usize; 3]) -> usize {
        ((origin[2] + data[2]) * counts[1] + (origin[1] + data[1])) * counts[0]
            + origin[0]
            + data[0]
    }

    fn fold_active<R>(&self, values: &[f64], init: R, mut fold: impl FnMut(R, f64) -> R) -> R {
        let mut acc = init;
        for origin in &self.origins {
            for data in indices([self.pkg_size; 3]) {
                acc = fold(acc, values[Self::global_index(self.counts, *origin, data)]);
            }
        }
        acc
    }
}

impl GridBackend for DenseBackend {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn add_one(&mut self, policy: ExecutionPolicy) {
        let counts = self.counts;
        let pkg_size = self.pkg_size;
        let origins = &self.origins;
        let out = UnsafeSlice::new(&mut self.a);
        for_each_index(policy, origins.len(), |slot| {
            let origin = origins[slot];
            for data in indices([pkg_size; 3]) {
                let idx = Self::global_index(counts, origin, data);
                // Blocks are disjoint across iterations.
                unsafe { out.write(idx, out.read(idx) + 1.0) };
            }
        });
    }

    fn laplacian(&mut self, policy: ExecutionPolicy) {
        let counts = self.counts;
        let pkg_size = self.pkg_size;
        let ds = self.ds;
        let strides = [1usize, counts[0], counts[0] * counts[1]];
        let origins = &self.origins;
        let a = &self.a;
        let out = UnsafeSlice::new(&mut self.b);
        for_each_index(policy, origins.len(), |slot| {
            let origin = origins[slot];
            for data in indices([pkg_size; 3]) {
                let idx = Self::global_index(counts, origin, data);
                let center = a[idx];
                // Same accumulation order as `stencil::laplacian_7pt`.
                let mut sum = 0.0;
                for k in 0..3 {
                    let minus = a[idx - strides[k]];
                    let plus = a[idx + strides[k]];
                    sum += minus + plus;
                }
                // Blocks are disjoint across iterations.
                unsafe { out.write(idx, (sum - 6.0 * center) / (ds * ds)) };
            }
        });
    }

    fn checksums(&self) -> (u64, u64) {
        (
            self.fold_active(&self.a, 0u64, |acc, v| acc ^ v.to_bits()),
            self.fold_active(&self.b, 0u64, |acc, v| acc ^ v.to_bits()),
        )
    }

    fn sum(&self) -> f64 {
        self.fold_active(&self.a, 0.0, |acc, v| acc + v)
    }

    fn active_points(&self) -> usize {
        self.active
    }

    fn overhead_bytes_per_point(&self) -> f64 {
        let allocated = 2 * self.a.len() * 8;
        let active = 2 * self.active * 8;
        (allocated - active) as f64 / self.active as f64
    }
}

/// Hashed sparse blocks: activated cells map through a `HashMap` to flat
/// value blocks; misses fall back to a per-cell far-field constant.
pub struct HashBackend {
    cells: [usize; 3],
    pkg_size: usize,
    ds: f64,
    map: HashMap<u64, usize>,
    /// Activated linear cells in package order.
    order: Vec<u64>,
    /// Signed far-field constant per background cell.
    far: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl HashBackend {
    pub fn new(layer: &LevelSetLayer<3>) -> Self {
        assert_band_detached(layer);
        let mesh = &layer.mesh;
        let geo = mesh.geometry();
        let block = geo.block_len();
        let large = layer.large_value();
        let phi = layer.phi.read();

        let far = mesh
            .background()
            .iter()
            .map(|&word| if word == 0 { -large } else { large })
            .collect();
        let activated = &mesh.meta()[SINGULAR_PACKAGES..];
        let mut map = HashMap::with_capacity(activated.len());
        let mut order = Vec::with_capacity(activated.len());
        let mut a = Vec::with_capacity(activated.len() * block);
        for (slot, meta) in activated.iter().enumerate() {
            map.insert(meta.linear_cell, slot);
            order.push(meta.linear_cell);
            let pkg = slot + SINGULAR_PACKAGES;
            a.extend_from_slice(&phi[pkg * block..(pkg + 1) * block]);
        }
        let b = vec![0.0; a.len()];
        HashBackend {
            cells: geo.cells_per_axis(),
            pkg_size: geo.pkg_size(),
            ds: geo.data_spacing(),
            map,
            order,
            far,
            a,
            b,
        }
    }

}

/// Value at a global data coordinate: hash probe, then far-field
/// fallback. `g` must name an in-bounds cell.
#[inline]
fn hash_value_at(
    map: &HashMap<u64, usize>,
    far: &[f64],
    values: &[f64],
    cells: [usize; 3],
    pkg_size: usize,
    g: [i64; 3],
) -> f64 {
    let p = pkg_size as i64;
    let cell = [
        g[0].div_euclid(p) as usize,
        g[1].div_euclid(p) as usize,
        g[2].div_euclid(p) as usize,
    ];
    let linear = linearize(cell, cells) as u64;
    match map.get(&linear) {
        Some(&slot) => {
            let data = [
                g[0].rem_euclid(p) as usize,
                g[1].rem_euclid(p) as usize,
                g[2].rem_euclid(p) as usize,
            ];
            values[slot * pow(pkg_size, 3) + linearize(data, [pkg_size; 3])]
        }
        None => far[linear as usize],
    }
}

impl GridBackend for HashBackend {
    fn name(&self) -> &'static str {
        "hash"
    }

    fn add_one(&mut self, policy: ExecutionPolicy) {
        let block = pow(self.pkg_size, 3);
        let slots = self.order.len();
        let out = UnsafeSlice::new(&mut self.a);
        for_each_index(policy, slots, |slot| {
            for idx in slot * block..(slot + 1) * block {
                // Blocks are disjoint across iterations.
                unsafe { out.write(idx, out.read(idx) + 1.0) };
            }
        });
    }

    fn laplacian(&mut self, policy: ExecutionPolicy) {
        let block = pow(self.pkg_size, 3);
        let pkg_size = self.pkg_size;
        let ds = self.ds;
        let cells = self.cells;
        let order = &self.order;
        let map = &self.map;
        let far = &self.far;
        let a = &self.a;
        let out = UnsafeSlice::new(&mut self.b);
        for_each_index(policy, order.len(), |slot| {
            let cell = delinearize(order[slot] as usize, cells);
            let origin = cells_origin(cell, pkg_size);
            for data in indices([pkg_size; 3]) {
                let g = [
                    (origin[0] + data[0]) as i64,
                    (origin[1] + data[1]) as i64,
                    (origin[2] + data[2]) as i64,
                ];
                let center = hash_value_at(map, far, a, cells, pkg_size, g);
                // Same accumulation order as `stencil::laplacian_7pt`.
                let mut sum = 0.0;
                for k in 0..3 {
                    let mut tap = g;
                    tap[k] -= 1;
                    let minus = hash_value_at(map, far, a, cells, pkg_size, tap);
                    tap[k] += 2;
                    let plus = hash_value_at(map, far, a, cells, pkg_size, tap);
                    sum += minus + plus;
                }
                let idx = slot * block + linearize(data, [pkg_size; 3]);
                // Blocks are disjoint across iterations.
                unsafe { out.write(idx, (sum - 6.0 * center) / (ds * ds)) };
            }
        });
    }

    fn checksums(&self) -> (u64, u64) {
        (xor_bits(&self.a), xor_bits(&self.b))
    }

    fn sum(&self) -> f64 {
        self.a.iter().sum()
    }

    fn active_points(&self) -> usize {
        self.a.len()
    }

    fn overhead_bytes_per_point(&self) -> f64 {
        // Rough hashbrown cost: key + value + one control byte per
        // capacity slot, plus the dense far-field table.
        let map = self.map.capacity() * (8 + 8 + 1);
        let far = self.far.len() * 8;
        (map + far) as f64 / self.active_points() as f64
    }
}

#[inline]
fn cells_origin(cell: [usize; 3], pkg_size: usize) -> [usize; 3] {
    [cell[0] * pkg_size, cell[1] * pkg_size, cell[2] * pkg_size]
}
