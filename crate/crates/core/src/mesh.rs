//! Sparse narrow-band mesh storage.
//!
//! A [`Mesh`] keeps all grid state in flat, contiguous arrays addressed by
//! package index:
//!
//! * `meta` — one [`MetaCell`] per package (owning cell + category),
//! * `neighborhoods` — `3^D` package indexes per package,
//! * `background` — one package index word per background cell,
//! * registered variables — one `pkg_size^D` block per package and value.
//!
//! Package indexes `0` and `1` are reserved for the two singular far-field
//! packages (negative and positive side of the surface); real packages
//! start at index `2`. An unactivated background cell stores `0` or `1`
//! directly, so a single background lookup resolves any cell to either its
//! data package or the correct far-field constant, with no pointer
//! chasing and no per-variable halo storage.

use std::any::TypeId;
use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{GeometryError, GridGeometry};
use crate::index::{linearize, neighborhood_slot};
use crate::variable::{AnyVariable, MeshVariable, VarValue};

/// Number of reserved singular packages.
pub const SINGULAR_PACKAGES: usize = 2;

/// Index of a data package; one unsigned word per reference.
pub type PackageIndex = u32;

/// Far-field package on the negative (inside) side of the surface.
pub const SINGULAR_NEGATIVE: PackageIndex = 0;
/// Far-field package on the positive (outside) side of the surface.
pub const SINGULAR_POSITIVE: PackageIndex = 1;

/// True for package indexes that carry real data.
#[inline]
pub const fn is_activated(pkg: PackageIndex) -> bool {
    pkg as usize >= SINGULAR_PACKAGES
}

/// Singular far-field package for a signed-distance sign.
#[inline]
pub fn singular_for_sign(sign: f64) -> PackageIndex {
    if sign < 0.0 {
        SINGULAR_NEGATIVE
    } else {
        SINGULAR_POSITIVE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PackageCategory {
    SingularNegative = 0,
    SingularPositive = 1,
    /// Activated cell in the outer rim of the band.
    Inner = 2,
    /// Activated cell cut by or close to the surface.
    Core = 3,
}

impl PackageCategory {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::SingularNegative),
            1 => Some(Self::SingularPositive),
            2 => Some(Self::Inner),
            3 => Some(Self::Core),
            _ => None,
        }
    }

    pub const fn is_singular(self) -> bool {
        matches!(self, Self::SingularNegative | Self::SingularPositive)
    }
}

/// Per-package record tying a package back to its background cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetaCell {
    /// Row-major linear index of the owning background cell;
    /// `u64::MAX` for the two singular packages.
    pub linear_cell: u64,
    pub category: PackageCategory,
}

impl MetaCell {
    pub fn new(linear_cell: u64, category: PackageCategory) -> Self {
        debug_assert!(!category.is_singular());
        Self {
            linear_cell,
            category,
        }
    }

    pub fn singular(category: PackageCategory) -> Self {
        debug_assert!(category.is_singular());
        Self {
            linear_cell: u64::MAX,
            category,
        }
    }
}

/// View of one package's `3^D` neighborhood slots. Slot `[1; D]` refers to
/// the owning cell itself.
#[derive(Debug, Clone, Copy)]
pub struct CellNeighborhood<'a, const D: usize>(pub &'a [PackageIndex]);

impl<'a, const D: usize> CellNeighborhood<'a, D> {
    /// Package index stored for a `{0, 1, 2}^D` offset.
    #[inline]
    pub fn at(&self, offset: [usize; D]) -> PackageIndex {
        self.0[neighborhood_slot(offset)]
    }

    /// Package index of the owning cell.
    #[inline]
    pub fn center(&self) -> PackageIndex {
        self.at([1; D])
    }
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("variable `{0}` is already registered for this value type")]
    DuplicateVariable(String),
    #[error("no variable `{0}` registered for the requested value type")]
    UnknownVariable(String),
    #[error("cell {0} tagged for activation more than once")]
    DuplicateCell(u64),
    #[error("mesh already holds activated packages")]
    AlreadyActivated,
    #[error("activation category for cell {0} must be Inner or Core")]
    InvalidCategory(u64),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarKind {
    /// One `pkg_size^D` block per package.
    PerPackage,
    /// One entry per package.
    PerPackageScalar,
    /// One entry per background cell; unaffected by reallocation.
    PerBackgroundCell,
}

struct RegistryEntry {
    kind: VarKind,
    var: Box<dyn AnyVariable>,
}

/// Exact byte accounting of one mesh, used to audit the storage layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshAudit {
    pub total_packages: usize,
    pub activated_packages: usize,
    /// Bytes of the neighborhood index array.
    pub neighborhood_bytes: usize,
    /// Bytes of the meta records.
    pub meta_bytes: usize,
    /// Words currently allocated for the background field (0 until the
    /// lazily allocated field is first written).
    pub background_words: usize,
    /// Host bytes over all registered per-package variables.
    pub variable_bytes: usize,
    pub registered_variables: usize,
}

impl MeshAudit {
    /// Topology bytes attributable to each activated cell: its
    /// neighborhood slots plus its meta record.
    pub fn topology_bytes_per_activated_cell(&self) -> usize {
        if self.activated_packages == 0 {
            return 0;
        }
        let singular = SINGULAR_PACKAGES;
        let nb = self.neighborhood_bytes / self.total_packages;
        let meta = self.meta_bytes / self.total_packages;
        ((self.total_packages - singular) * (nb + meta)) / self.activated_packages
    }
}

/// Sparse narrow-band mesh over one background grid.
pub struct Mesh<const D: usize> {
    geometry: GridGeometry<D>,
    meta: Vec<MetaCell>,
    neighborhoods: Vec<PackageIndex>,
    /// Lazily allocated: empty until the first activation or stamp, at
    /// which point it is sized to the full background mesh.
    background: Vec<PackageIndex>,
    registry: HashMap<(TypeId, String), RegistryEntry>,
}

impl<const D: usize> Mesh<D> {
    pub fn new(geometry: GridGeometry<D>) -> Self {
        let nb_stride = geometry.neighborhood_len();
        let mut neighborhoods = vec![0 as PackageIndex; SINGULAR_PACKAGES * nb_stride];
        neighborhoods[nb_stride..].fill(SINGULAR_POSITIVE);
        Self {
            geometry,
            meta: vec![
                MetaCell::singular(PackageCategory::SingularNegative),
                MetaCell::singular(PackageCategory::SingularPositive),
            ],
            neighborhoods,
            background: Vec::new(),
            registry: HashMap::new(),
        }
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry<D> {
        &self.geometry
    }

    #[inline]
    pub fn total_packages(&self) -> usize {
        self.meta.len()
    }

    #[inline]
    pub fn activated_packages(&self) -> usize {
        self.meta.len() - SINGULAR_PACKAGES
    }

    #[inline]
    pub fn meta(&self) -> &[MetaCell] {
        &self.meta
    }

    #[inline]
    pub fn block_len(&self) -> usize {
        self.geometry.block_len()
    }

    #[inline]
    pub fn neighborhood_stride(&self) -> usize {
        self.geometry.neighborhood_len()
    }

    /// Neighborhood view of one package.
    #[inline]
    pub fn neighborhood(&self, pkg: usize) -> CellNeighborhood<'_, D> {
        let stride = self.neighborhood_stride();
        CellNeighborhood(&self.neighborhoods[pkg * stride..(pkg + 1) * stride])
    }

    #[inline]
    pub fn neighborhoods(&self) -> &[PackageIndex] {
        &self.neighborhoods
    }

    #[cfg(test)]
    pub(crate) fn set_neighborhood_slot(&mut self, pkg: usize, slot: usize, value: PackageIndex) {
        let stride = self.neighborhood_stride();
        self.neighborhoods[pkg * stride + slot] = value;
    }

    pub(crate) fn neighborhoods_mut(&mut self) -> &mut [PackageIndex] {
        &mut self.neighborhoods
    }

    /// Package index stored for a background cell; cells of a mesh whose
    /// background field was never written count as unactivated negative
    /// far field.
    #[inline]
    pub fn background_value(&self, linear_cell: usize) -> PackageIndex {
        if self.background.is_empty() {
            SINGULAR_NEGATIVE
        } else {
            self.background[linear_cell]
        }
    }

    #[inline]
    pub fn background_words(&self) -> usize {
        self.background.len()
    }

    #[inline]
    pub fn background(&self) -> &[PackageIndex] {
        &self.background
    }

    /// Package index for a cell given as signed coordinates, or `None` if
    /// the cell lies outside the background mesh.
    #[inline]
    pub fn package_at(&self, cell: [i64; D]) -> Option<PackageIndex> {
        if !self.geometry.cell_in_bounds(cell) {
            return None;
        }
        let cell = cell.map(|c| c as usize);
        Some(self.background_value(linearize(cell, self.geometry.cells_per_axis())))
    }

    #[inline]
    pub fn is_activated_cell(&self, cell: [usize; D]) -> bool {
        is_activated(self.background_value(linearize(cell, self.geometry.cells_per_axis())))
    }

    pub(crate) fn ensure_background(&mut self) {
        if self.background.is_empty() {
            self.background = vec![SINGULAR_NEGATIVE; self.geometry.cell_count()];
        }
    }

    /// Overwrite one background word. Far-field stamps are part of the
    /// stored state (they carry the sign of unactivated cells), so loaders
    /// restoring a mesh from disk need direct write access.
    pub fn set_background_value(&mut self, linear_cell: usize, value: PackageIndex) {
        self.ensure_background();
        self.background[linear_cell] = value;
    }

    /// Mutable background field, allocating it on first use.
    pub(crate) fn background_mut(&mut self) -> &mut [PackageIndex] {
        self.ensure_background();
        &mut self.background
    }

    /// Activate the tagged cells as data packages. The list is sorted by
    /// linear cell index and package indexes `2, 3, ...` are assigned in
    /// that order; every registered per-package variable is reallocated to
    /// the new package count. Duplicate cells are an error.
    pub fn activate_cells(
        &mut self,
        mut tagged: Vec<(usize, PackageCategory)>,
    ) -> Result<(), MeshError> {
        if self.activated_packages() != 0 {
            return Err(MeshError::AlreadyActivated);
        }
        tagged.sort_unstable_by_key(|&(lin, _)| lin);
        for pair in tagged.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(MeshError::DuplicateCell(pair[0].0 as u64));
            }
        }
        if let Some(&(lin, _)) = tagged.iter().find(|(_, cat)| cat.is_singular()) {
            return Err(MeshError::InvalidCategory(lin as u64));
        }
        self.reallocate_packages(SINGULAR_PACKAGES + tagged.len());
        self.ensure_background();
        for (i, &(lin, cat)) in tagged.iter().enumerate() {
            let pkg = (SINGULAR_PACKAGES + i) as PackageIndex;
            self.meta[pkg as usize] = MetaCell::new(lin as u64, cat);
            self.background[lin] = pkg;
        }
        Ok(())
    }

    /// Resize meta, neighborhood and per-package variable storage to
    /// `new_total` packages. Existing entries are preserved; new entries
    /// are default-initialized.
    pub fn reallocate_packages(&mut self, new_total: usize) {
        assert!(new_total >= SINGULAR_PACKAGES);
        self.meta
            .resize(new_total, MetaCell::singular(PackageCategory::SingularPositive));
        // Placeholder meta for fresh packages; activation overwrites them.
        for m in &mut self.meta[SINGULAR_PACKAGES..] {
            if m.linear_cell == u64::MAX {
                *m = MetaCell::new(0, PackageCategory::Inner);
            }
        }
        let stride = self.neighborhood_stride();
        self.neighborhoods.resize(new_total * stride, SINGULAR_NEGATIVE);
        let block = self.block_len();
        for entry in self.registry.values() {
            match entry.kind {
                VarKind::PerPackage => entry.var.resize_entries(new_total * block),
                VarKind::PerPackageScalar => entry.var.resize_entries(new_total),
                VarKind::PerBackgroundCell => {}
            }
        }
    }

    fn register<T: VarValue>(
        &mut self,
        name: &str,
        kind: VarKind,
        len: usize,
    ) -> Result<MeshVariable<T>, MeshError> {
        let key = (TypeId::of::<T>(), name.to_owned());
        if self.registry.contains_key(&key) {
            return Err(MeshError::DuplicateVariable(name.to_owned()));
        }
        let var = MeshVariable::<T>::new(name, len);
        self.registry.insert(
            key,
            RegistryEntry {
                kind,
                var: Box::new(var.clone()),
            },
        );
        Ok(var)
    }

    /// Register a per-package variable holding one `pkg_size^D` block per
    /// package. Registering the same name twice for the same value type is
    /// an error; the same name under different value types is distinct.
    pub fn register_mesh_variable<T: VarValue>(
        &mut self,
        name: &str,
    ) -> Result<MeshVariable<T>, MeshError> {
        let len = self.total_packages() * self.block_len();
        self.register(name, VarKind::PerPackage, len)
    }

    /// Register a per-package record variable (one entry per package).
    pub fn register_meta_variable<T: VarValue>(
        &mut self,
        name: &str,
    ) -> Result<MeshVariable<T>, MeshError> {
        let len = self.total_packages();
        self.register(name, VarKind::PerPackageScalar, len)
    }

    /// Register a per-background-cell variable. Its length is fixed by the
    /// grid geometry and unaffected by package reallocation.
    pub fn register_background_variable<T: VarValue>(
        &mut self,
        name: &str,
    ) -> Result<MeshVariable<T>, MeshError> {
        let len = self.geometry.cell_count();
        self.register(name, VarKind::PerBackgroundCell, len)
    }

    /// Retrieve a previously registered variable by value type and name.
    pub fn variable<T: VarValue>(&self, name: &str) -> Result<MeshVariable<T>, MeshError> {
        let key = (TypeId::of::<T>(), name.to_owned());
        self.registry
            .get(&key)
            .and_then(|e| e.var.as_any().downcast_ref::<MeshVariable<T>>())
            .cloned()
            .ok_or_else(|| MeshError::UnknownVariable(name.to_owned()))
    }

    /// Exact byte accounting of the current storage.
    pub fn audit(&self) -> MeshAudit {
        MeshAudit {
            total_packages: self.total_packages(),
            activated_packages: self.activated_packages(),
            neighborhood_bytes: self.neighborhoods.len() * std::mem::size_of::<PackageIndex>(),
            meta_bytes: self.meta.len() * std::mem::size_of::<MetaCell>(),
            background_words: self.background.len(),
            variable_bytes: self
                .registry
                .values()
                .filter(|e| e.kind == VarKind::PerPackage)
                .map(|e| e.var.host_bytes())
                .sum(),
            registered_variables: self.registry.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::pow;
    use nalgebra::vector;

    fn mesh_2d() -> Mesh<2> {
        let g = GridGeometry::new(vector![0.0, 0.0], 0.25, [4, 4], 4).unwrap();
        Mesh::new(g)
    }

    #[test]
    fn fresh_mesh_has_only_singular_packages_and_no_background() {
        let m = mesh_2d();
        assert_eq!(m.total_packages(), 2);
        assert_eq!(m.background_words(), 0, "background field allocates lazily");
        assert_eq!(m.background_value(7), SINGULAR_NEGATIVE);
        // Singular neighborhoods are self-referential.
        assert_eq!(m.neighborhood(0).at([0, 2]), SINGULAR_NEGATIVE);
        assert_eq!(m.neighborhood(1).center(), SINGULAR_POSITIVE);
    }

    #[test]
    fn huge_mesh_creation_allocates_no_per_cell_storage() {
        let g = GridGeometry::new(vector![0.0, 0.0, 0.0], 1.0 / 256.0, [1024, 1024, 1024], 4)
            .unwrap();
        let m = Mesh::new(g);
        let audit = m.audit();
        assert_eq!(audit.background_words, 0);
        assert_eq!(audit.total_packages, 2);
    }

    #[test]
    fn activation_sorts_cells_and_assigns_indexes_in_order() {
        let mut m = mesh_2d();
        m.activate_cells(vec![
            (9, PackageCategory::Core),
            (3, PackageCategory::Inner),
            (12, PackageCategory::Core),
        ])
        .unwrap();
        assert_eq!(m.total_packages(), 5);
        assert_eq!(m.meta()[2], MetaCell::new(3, PackageCategory::Inner));
        assert_eq!(m.meta()[3], MetaCell::new(9, PackageCategory::Core));
        assert_eq!(m.meta()[4], MetaCell::new(12, PackageCategory::Core));
        assert_eq!(m.background_value(9), 3);
        assert_eq!(m.background_value(0), SINGULAR_NEGATIVE);
        assert!(m.is_activated_cell([0, 3]));
    }

    #[test]
    fn duplicate_cells_are_rejected() {
        let mut m = mesh_2d();
        let err = m
            .activate_cells(vec![(5, PackageCategory::Core), (5, PackageCategory::Inner)])
            .unwrap_err();
        assert!(matches!(err, MeshError::DuplicateCell(5)));
    }

    #[test]
    fn registration_and_retrieval_by_type_and_name() {
        let mut m = mesh_2d();
        let phi = m.register_mesh_variable::<f64>("phi").unwrap();
        assert_eq!(phi.len(), 2 * 16);
        // Same name, different value type: distinct variable.
        let grad = m
            .register_mesh_variable::<nalgebra::SVector<f64, 2>>("phi")
            .unwrap();
        assert_eq!(grad.len(), 2 * 16);
        assert!(m.register_mesh_variable::<f64>("phi").is_err());
        assert!(m.variable::<f64>("phi").is_ok());
        assert!(m.variable::<f32>("phi").is_err());
    }

    #[test]
    fn reallocation_preserves_entries_and_resizes_all_package_variables() {
        let mut m = mesh_2d();
        let phi = m.register_mesh_variable::<f64>("phi").unwrap();
        let per_pkg = m.register_meta_variable::<u32>("tag").unwrap();
        let per_cell = m.register_background_variable::<u8>("mask").unwrap();
        phi.write()[5] = 4.5;

        m.activate_cells(vec![(1, PackageCategory::Core), (2, PackageCategory::Inner)])
            .unwrap();
        assert_eq!(phi.len(), 4 * 16);
        assert_eq!(phi.read()[5], 4.5);
        assert_eq!(per_pkg.len(), 4);
        assert_eq!(per_cell.len(), 16);
    }

    #[test]
    fn topology_overhead_is_independent_of_variable_count() {
        let expected = pow(3, 2) * std::mem::size_of::<PackageIndex>()
            + std::mem::size_of::<MetaCell>();

        let mut audits = Vec::new();
        for vars in [1usize, 5] {
            let mut m = mesh_2d();
            for i in 0..vars {
                m.register_mesh_variable::<f64>(&format!("v{i}")).unwrap();
            }
            m.activate_cells(vec![(1, PackageCategory::Core), (2, PackageCategory::Inner)])
                .unwrap();
            audits.push(m.audit());
        }
        for audit in &audits {
            assert_eq!(audit.topology_bytes_per_activated_cell(), expected);
        }
        assert_eq!(
            audits[0].topology_bytes_per_activated_cell(),
            audits[1].topology_bytes_per_activated_cell()
        );
        // Data storage itself is exact: block length times value size, no
        // per-variable halo.
        assert_eq!(audits[0].variable_bytes, 4 * 16 * 8);
        assert_eq!(audits[1].variable_bytes, 5 * 4 * 16 * 8);
    }
}
