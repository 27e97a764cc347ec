//! Shape records: a canonical mesh with its cached surface samples, KD index
//! and descriptor.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::geometry::{sample_surface_n, KdIndex, PointCloud, TriangleMesh};
use crate::math;
use crate::shapedesc::{descriptor, Descriptor};

/// Surface samples kept per model for the chamfer terms.
pub const CANONICAL_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ShapeId(pub u32);

impl fmt::Display for ShapeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct ShapeRecord {
    pub id: ShapeId,
    pub category: String,
    pub mesh: TriangleMesh,
    pub sample_seed: u64,
    samples: PointCloud,
    index: KdIndex,
    descriptor: Descriptor,
}

impl ShapeRecord {
    /// Normalizes the mesh into the unit box and derives the cached data.
    pub fn new(id: ShapeId, category: impl Into<String>, mesh: &TriangleMesh, sample_seed: u64) -> Result<ShapeRecord> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Self::from_canonical(id, category, mesh.normalized_to_unit_box(), sample_seed)
    }

    /// Like [`ShapeRecord::new`] for a mesh that is already normalized, such
    /// as one written out from an existing record. Skipping the second
    /// normalization keeps reloaded records bit-identical.
    pub fn from_canonical(id: ShapeId, category: impl Into<String>, mesh: TriangleMesh, sample_seed: u64) -> Result<ShapeRecord> {
        let Some((lo, hi)) = mesh.bounds() else {
            return Err(Error::EmptyMesh);
        };
        let off = |v: f64, want: f64| math::abs(v - want) > 1e-9;
        if off(lo.x, -0.5) || off(lo.y, -0.5) || off(lo.z, -0.5) || off(hi.x, 0.5) || off(hi.y, 0.5) || off(hi.z, 0.5) {
            return Err(Error::InvalidArgument(alloc::format!("shape {id} is not normalized to the unit box")));
        }
        let category = category.into();
        let mesh = mesh.with_category(category.clone());
        let samples = sample_surface_n(&mesh, CANONICAL_SAMPLES, math::mix_seed(sample_seed, id.0 as u64))?;
        let index = KdIndex::build(&samples);
        let descriptor = descriptor(&samples)?;
        Ok(ShapeRecord { id, category, mesh, sample_seed, samples, index, descriptor })
    }

    /// Canonical-frame surface samples.
    pub fn samples(&self) -> &PointCloud {
        &self.samples
    }

    pub fn index(&self) -> &KdIndex {
        &self.index
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn content_hash(&self) -> u64 {
        self.mesh.content_hash()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ShapeDatabase {
    records: Vec<ShapeRecord>,
    by_id: BTreeMap<ShapeId, usize>,
}

impl ShapeDatabase {
    pub fn new(records: Vec<ShapeRecord>) -> Result<ShapeDatabase> {
        let mut by_id = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.id, i).is_some() {
                return Err(Error::InvalidArgument(alloc::format!("duplicate shape id {}", r.id)));
            }
        }
        Ok(ShapeDatabase { records, by_id })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ShapeRecord] {
        &self.records
    }

    pub fn get(&self, id: ShapeId) -> Result<&ShapeRecord> {
        self.by_id.get(&id).map(|&i| &self.records[i]).ok_or(Error::UnknownShape(id.0))
    }

    pub fn contains(&self, id: ShapeId) -> bool {
        self.by_id.contains_key(&id)
    }

    /// Ids in ascending order.
    pub fn ids(&self) -> Vec<ShapeId> {
        self.by_id.keys().copied().collect()
    }

    /// Category labels in sorted order.
    pub fn categories(&self) -> Vec<String> {
        let mut c: Vec<String> = self.records.iter().map(|r| r.category.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    pub fn ids_in_category(&self, category: &str) -> Vec<ShapeId> {
        self.by_id.iter().filter(|(_, &i)| self.records[i].category == category).map(|(&id, _)| id).collect()
    }
}
