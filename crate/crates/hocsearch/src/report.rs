//! Run outputs and benchmark reports.

use std::collections::BTreeMap;
use std::path::Path;

use hoc_core::mcts::{Candidate, SearchResult};
use hoc_core::metrics::speedup;
use hoc_core::synth::GroundTruth;
use hoc_core::ShapeId;
use serde::{Deserialize, Serialize};

use crate::error::{self, FormatError, Result};

pub const RUN_VERSION: u64 = 1;
pub const REPORT_VERSION: u64 = 1;

/// What `search`, `baseline` and `exhaustive` write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub version: u64,
    pub query: String,
    /// Method and budget, e.g. `hoc@100`.
    pub label: String,
    pub method: String,
    pub objective: String,
    pub best: Candidate,
    pub best_score: f64,
    pub evaluations: usize,
    pub objective_calls: u64,
    /// Candidate evaluations exhaustive search needs on the same input.
    pub leaves: usize,
    /// Best candidate per shape, best first.
    pub ranking: Vec<Candidate>,
    pub ground_truth: Option<GroundTruth>,
}

impl RunOutput {
    pub fn from_search(query: &str, label: String, method: &str, objective: &str, r: &SearchResult, leaves: usize) -> Self {
        RunOutput {
            version: RUN_VERSION,
            query: query.to_string(),
            label,
            method: method.to_string(),
            objective: objective.to_string(),
            best: r.best,
            best_score: r.best_score,
            evaluations: r.evaluations,
            objective_calls: r.objective_calls,
            leaves,
            ranking: r.ranking.clone(),
            ground_truth: None,
        }
    }

    /// From a fully ranked candidate list (every evaluation, best first).
    pub fn from_ranked(query: &str, label: String, method: &str, objective: &str, ranked: &[Candidate], leaves: usize) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        let ranking: Vec<Candidate> = ranked.iter().filter(|c| seen.insert(c.shape)).copied().collect();
        RunOutput {
            version: RUN_VERSION,
            query: query.to_string(),
            label,
            method: method.to_string(),
            objective: objective.to_string(),
            best: ranked[0],
            best_score: -ranked[0].loss,
            evaluations: ranked.len(),
            objective_calls: ranked.len() as u64,
            leaves,
            ranking,
            ground_truth: None,
        }
    }

    pub fn top_shapes(&self, k: usize) -> Vec<ShapeId> {
        self.ranking.iter().take(k).map(|c| c.shape).collect()
    }
}

pub fn write_run(path: &Path, run: &RunOutput) -> Result<()> {
    error::write_json(path, run)
}

pub fn read_run(path: &Path) -> Result<RunOutput> {
    error::read_versioned(path, RUN_VERSION)
}

/// One (query, method) row of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: String,
    pub method: String,
    pub best_shape: ShapeId,
    pub best_angle: f64,
    pub loss: f64,
    pub evaluations: usize,
    pub objective_calls: u64,
    pub exhaustive_evaluations: usize,
    pub speedup: f64,
    pub top1: bool,
    pub top5: bool,
    pub chamfer_to_gt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub queries: usize,
    pub top1_ra: f64,
    pub top5_ra: f64,
    pub mean_evaluations: f64,
    pub speedup: f64,
    pub mean_chamfer_to_gt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u64,
    pub objective: String,
    pub records: Vec<QueryRecord>,
    pub aggregates: Vec<MethodAggregate>,
}

/// Aggregates in first-appearance order of the methods. Pure function of the
/// records, so a report can always be re-derived from its rows.
pub fn aggregate(records: &[QueryRecord]) -> Vec<MethodAggregate> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_method: BTreeMap<&str, Vec<&QueryRecord>> = BTreeMap::new();
    for r in records {
        if !by_method.contains_key(r.method.as_str()) {
            order.push(&r.method);
        }
        by_method.entry(&r.method).or_default().push(r);
    }
    order
        .into_iter()
        .map(|m| {
            let rows = &by_method[m];
            let n = rows.len() as f64;
            let frac = |f: fn(&QueryRecord) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
            let evals: usize = rows.iter().map(|r| r.evaluations).sum();
            let exhaustive: usize = rows.iter().map(|r| r.exhaustive_evaluations).sum();
            let chamfers: Option<Vec<f64>> = rows.iter().map(|r| r.chamfer_to_gt).collect();
            MethodAggregate {
                method: m.to_string(),
                queries: rows.len(),
                top1_ra: frac(|r| r.top1),
                top5_ra: frac(|r| r.top5),
                mean_evaluations: evals as f64 / n,
                speedup: speedup(exhaustive, evals),
                mean_chamfer_to_gt: chamfers.map(|c| c.iter().sum::<f64>() / n),
            }
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> FormatError {
    FormatError::parse(path, e.position().map_or(0, |p| p.byte() as usize), e.to_string())
}

fn to_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Writes `<stem>.csv` (records), `<stem>_aggregates.csv` and `<stem>.json`.
pub fn write_report(csv_path: &Path, report: &EvalReport) -> Result<()> {
    let mut records = report.records.clone();
    // CSV needs a fixed header, so an absent chamfer becomes an empty cell
    // and wall time is either present on every row or on none
    let timing = records.iter().any(|r| r.wall_ms.is_some());
    if timing {
        for r in &mut records {
            r.wall_ms.get_or_insert(0.0);
        }
    }
    error::write(csv_path, &to_csv(csv_path, &records)?)?;
    let agg_path = sibling(csv_path, "_aggregates", "csv");
    error::write(&agg_path, &to_csv(&agg_path, &report.aggregates)?)?;
    error::write_json(&sibling(csv_path, "", "json"), report)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<QueryRecord>> {
    let bytes = error::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn read_aggregates_csv(path: &Path) -> Result<Vec<MethodAggregate>> {
    let bytes = error::read(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    error::read_versioned(path, REPORT_VERSION)
}

/// `dir/name.csv` -> `dir/name<suffix>.<ext>`.
pub fn sibling(path: &Path, suffix: &str, ext: &str) -> std::path::PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, evals: usize, top1: bool, chamfer: Option<f64>) -> QueryRecord {
        QueryRecord {
            query: "q".into(),
            method: method.into(),
            best_shape: ShapeId(1),
            best_angle: 0.0,
            loss: 0.5,
            evaluations: evals,
            objective_calls: evals as u64,
            exhaustive_evaluations: 2000,
            speedup: speedup(2000, evals),
            top1,
            top5: true,
            chamfer_to_gt: chamfer,
            wall_ms: None,
        }
    }

    #[test]
    fn aggregates_follow_records() {
        let rows =
            vec![rec("hoc@100", 100, true, Some(0.1)), rec("greedy", 120, false, None), rec("hoc@100", 100, false, Some(0.3))];
        let agg = aggregate(&rows);
        assert_eq!(agg[0].method, "hoc@100");
        assert_eq!(agg[0].top1_ra, 0.5);
        assert_eq!(agg[0].speedup, 20.0);
        assert_eq!(agg[0].mean_chamfer_to_gt, Some(0.2));
        assert_eq!(agg[1].mean_chamfer_to_gt, None);
        assert_eq!(agg[1].top5_ra, 1.0);
    }

    #[test]
    fn csv_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec("hoc@100", 100, true, Some(0.1 + 0.2)), rec("hoc@100", 300, false, Some(1.0 / 3.0))];
        let report = EvalReport { version: REPORT_VERSION, objective: "rac".into(), aggregates: aggregate(&records), records };
        let path = dir.path().join("report.csv");
        write_report(&path, &report).unwrap();
        assert_eq!(read_records_csv(&path).unwrap(), report.records);
        assert_eq!(read_aggregates_csv(&sibling(&path, "_aggregates", "csv")).unwrap(), report.aggregates);
        assert_eq!(read_report_json(&sibling(&path, "", "json")).unwrap(), report);
    }
}
