//! Shape database directories: `db.json`, `meshes/<id>.obj` and a
//! descriptor cache.

use std::path::Path;

use hoc_core::shapedesc::Descriptor;
use hoc_core::{ShapeDatabase, ShapeId, ShapeRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{self, FormatError, Result};
use crate::obj;

pub const DB_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbManifest {
    pub version: u64,
    pub seed: u64,
    pub families: Vec<String>,
    pub shapes: Vec<ShapeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub id: ShapeId,
    pub category: String,
    pub sample_seed: u64,
    pub mesh: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorEntry {
    pub shape_id: ShapeId,
    pub vector: Descriptor,
}

/// FNV-1a over the per-shape mesh hashes in id order.
pub fn database_hash(db: &ShapeDatabase) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for r in db.records() {
        for b in r.id.0.to_le_bytes().into_iter().chain(r.content_hash().to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn write_db(dir: &Path, db: &ShapeDatabase, seed: u64, families: &[String]) -> Result<()> {
    let mut shapes = Vec::with_capacity(db.len());
    for r in db.records() {
        let mesh = format!("meshes/{}.obj", r.id);
        obj::write(&dir.join(&mesh), &r.mesh)?;
        shapes.push(ShapeEntry {
            id: r.id,
            category: r.category.clone(),
            sample_seed: r.sample_seed,
            mesh,
            hash: format!("{:016x}", r.content_hash()),
        });
    }
    let descriptors: Vec<DescriptorEntry> =
        db.records().iter().map(|r| DescriptorEntry { shape_id: r.id, vector: r.descriptor().clone() }).collect();
    error::write_json(&dir.join("descriptors.json"), &descriptors)?;
    let manifest = DbManifest { version: DB_VERSION, seed, families: families.to_vec(), shapes };
    error::write_json(&dir.join("db.json"), &manifest)
}

/// Loads every mesh and recomputes the derived data; a stale descriptor
/// cache or mesh hash is reported rather than silently used.
pub fn read_db(dir: &Path) -> Result<ShapeDatabase> {
    let manifest_path = dir.join("db.json");
    let manifest: DbManifest = error::read_versioned(&manifest_path, DB_VERSION)?;
    let records: Vec<ShapeRecord> = manifest
        .shapes
        .par_iter()
        .map(|e| {
            let path = dir.join(&e.mesh);
            let mesh = obj::read(&path)?;
            let r = ShapeRecord::from_canonical(e.id, e.category.clone(), mesh, e.sample_seed)
                .map_err(|err| FormatError::invalid(&path, err))?;
            let hash = format!("{:016x}", r.content_hash());
            if hash != e.hash {
                return Err(FormatError::parse(&path, 0, format!("mesh hash {hash} does not match db.json ({})", e.hash)));
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let db = ShapeDatabase::new(records).map_err(|e| FormatError::invalid(&manifest_path, e))?;
    let cache_path = dir.join("descriptors.json");
    if cache_path.exists() {
        let cache: Vec<DescriptorEntry> = error::read_json(&cache_path)?;
        for entry in &cache {
            let r = db.get(entry.shape_id).map_err(|e| FormatError::invalid(&cache_path, e))?;
            if r.descriptor() != &entry.vector {
                return Err(FormatError::parse(&cache_path, 0, format!("stale descriptor for shape {}", entry.shape_id)));
            }
        }
    }
    Ok(db)
}
