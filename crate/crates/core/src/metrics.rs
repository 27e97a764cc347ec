//! Retrieval and placement metrics.

use alloc::string::String;
use alloc::vec::Vec;

use crate::database::{ShapeDatabase, ShapeId};
use crate::error::{Error, Result};
use crate::geometry::{chamfer, sample_count, sample_surface_n, PointCloud, Pose};
use crate::math;

/// Fraction of queries whose reference appears among the first `k` entries
/// of that query's ranking.
pub fn topk_ra<T: PartialEq>(rankings: &[Vec<T>], reference: &[T], k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    if rankings.len() != reference.len() {
        return Err(Error::InvalidArgument("one reference per query is required".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let hits = rankings.iter().zip(reference).filter(|(ranked, r)| ranked.iter().take(k).any(|x| x == *r)).count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Evaluation-count speedup of a method relative to exhaustive search.
pub fn speedup(exhaustive_evaluations: usize, method_evaluations: usize) -> f64 {
    exhaustive_evaluations as f64 / method_evaluations as f64
}

/// A shape placed in the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Placement {
    pub shape: ShapeId,
    pub pose: Pose,
}

/// Surface samples of a placed shape, counted by the box-volume rule.
pub fn posed_samples(db: &ShapeDatabase, p: &Placement, density: f64, seed: u64) -> Result<PointCloud> {
    p.pose.validate()?;
    let record = db.get(p.shape)?;
    let n = sample_count(p.pose.scale, density);
    let xf = p.pose.transform();
    let canonical = sample_surface_n(&record.mesh, n, math::mix_seed(seed, p.shape.0 as u64))?;
    Ok(canonical.iter().map(|&q| xf.apply(q)).collect())
}

/// Chamfer distance between two placements, each sampled independently.
pub fn placement_chamfer(db: &ShapeDatabase, a: &Placement, b: &Placement, density: f64, seed: u64) -> Result<f64> {
    let pa = posed_samples(db, a, density, math::mix_seed(seed, 1))?;
    let pb = posed_samples(db, b, density, math::mix_seed(seed, 2))?;
    chamfer(&pa, &pb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChamferQuery {
    pub query: String,
    pub retrieved: Placement,
    pub truth: Option<Placement>,
}

/// Mean chamfer distance from each retrieved placement to its ground truth.
pub fn mean_chamfer_report(db: &ShapeDatabase, queries: &[ChamferQuery], density: f64, seed: u64) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let missing: Vec<&str> = queries.iter().filter(|q| q.truth.is_none()).map(|q| q.query.as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing.join(", ")));
    }
    let mut total = 0.0;
    for (i, q) in queries.iter().enumerate() {
        let truth = q.truth.as_ref().expect("checked above");
        total += placement_chamfer(db, &q.retrieved, truth, density, math::mix_seed(seed, i as u64))?;
    }
    Ok(total / queries.len() as f64)
}
