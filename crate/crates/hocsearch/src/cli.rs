//! Command-line surface. Every command is a pure function of its inputs and
//! seed; the only nondeterministic output (wall time) is opt-in.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hoc_core::geometry::DEFAULT_SAMPLE_DENSITY;
use hoc_core::hoctree::{HocTree, TreeOptions};
use hoc_core::math::mix_seed;
use hoc_core::mcts::{
    exhaustive_search, greedy_search, hoc_search, nn_rerank, Candidate, Evaluator, RefineTrigger, ScoreMode, SearchConfig,
};
use hoc_core::metrics::{placement_chamfer, speedup, topk_ra, Placement};
use hoc_core::objective::{ObjectiveKind, ObjectiveWeights, PreparedScene};
use hoc_core::synth::{gen_database, gen_scene, random_scene_spec, CameraRig, Perturbation, SceneOptions, ShapeFamily};
use hoc_core::ShapeDatabase;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::db_dir::{database_hash, read_db, write_db};
use crate::report::{self, aggregate, EvalReport, QueryRecord, RunOutput, REPORT_VERSION};
use crate::scene_dir::{list_scenes, read_scene, write_scene, StoredScene};
use crate::tree_file::{self, TreeFile};

#[derive(Debug, Parser)]
#[command(name = "hocsearch", version, about = "Shape model and pose retrieval by tree search over clustered databases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic shape database.
    GenDb(GenDbArgs),
    /// Render synthetic scenes around database shapes.
    GenScenes(GenScenesArgs),
    /// Cluster a database into a search tree.
    BuildTree(BuildTreeArgs),
    /// Tree search for the best shape and pose in one scene.
    Search(SearchArgs),
    /// Score every shape at every angle.
    Exhaustive(ExhaustiveArgs),
    /// Greedy tree descent or descriptor shortlist with re-ranking.
    Baseline(BaselineArgs),
    /// Run several methods over a directory of scenes.
    Bench(BenchArgs),
    /// Retrieval accuracy of saved results.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Rac,
    Cd,
    Mscd,
    Embed,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Rac => ObjectiveKind::Rac,
            ObjectiveArg::Cd => ObjectiveKind::Cd,
            ObjectiveArg::Mscd => ObjectiveKind::Mscd,
            ObjectiveArg::Embed => ObjectiveKind::Embed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScoreModeArg {
    Raw,
    Minmax,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TriggerArg {
    Global,
    Branch,
}

/// Objective selection and weights; unset weights fall back to the config
/// file, then to the defaults.
#[derive(Debug, Clone, Args)]
pub struct ObjectiveOpts {
    #[arg(long, value_enum, default_value = "rac")]
    pub objective: ObjectiveArg,
    /// JSON file with weight and search defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda_m: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_sil: Option<f64>,
    #[arg(long)]
    pub lambda_cd: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub lambda_m: Option<f64>,
    pub lambda_s: Option<f64>,
    pub lambda_sil: Option<f64>,
    pub lambda_cd: Option<f64>,
    pub lambda_start: Option<f64>,
    pub lambda_end: Option<f64>,
    pub refine_steps_incremental: Option<usize>,
    pub refine_steps_final: Option<usize>,
}

impl ObjectiveOpts {
    fn config_file(&self) -> Result<ConfigFile> {
        match &self.config {
            Some(p) => Ok(crate::error::read_json(p)?),
            None => Ok(ConfigFile::default()),
        }
    }

    fn weights(&self) -> Result<ObjectiveWeights> {
        let file = self.config_file()?;
        let d = ObjectiveWeights::default();
        let w = ObjectiveWeights {
            lambda_m: self.lambda_m.or(file.lambda_m).unwrap_or(d.lambda_m),
            lambda_s: self.lambda_s.or(file.lambda_s).unwrap_or(d.lambda_s),
            lambda_sil: self.lambda_sil.or(file.lambda_sil).unwrap_or(d.lambda_sil),
            lambda_cd: self.lambda_cd.or(file.lambda_cd).unwrap_or(d.lambda_cd),
        };
        w.validate()?;
        Ok(w)
    }

    fn kind(&self) -> ObjectiveKind {
        self.objective.into()
    }
}

#[derive(Debug, Args)]
pub struct GenDbArgs {
    /// Comma-separated families: box, cylinder, table, chair, shelf.
    #[arg(long, value_delimiter = ',', default_value = "box,cylinder,table,chair,shelf")]
    pub families: Vec<String>,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenScenesArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Probability that a camera gets an occluder.
    #[arg(long, default_value_t = 0.0)]
    pub occluders: f64,
    #[arg(long, default_value_t = 14)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Proposal yaw error bound, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub perturb_yaw: f64,
    /// Proposal center error bound as a fraction of the extent.
    #[arg(long, default_value_t = 0.0)]
    pub perturb_trans: f64,
    /// Proposal extent error bound as a fraction.
    #[arg(long, default_value_t = 0.0)]
    pub perturb_scale: f64,
    /// Proposals lose their yaw entirely.
    #[arg(long)]
    pub axis_aligned: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildTreeArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,90,180,270")]
    pub pose_angles: Vec<f64>,
    /// Add a category level above the pose nodes.
    #[arg(long)]
    pub categories: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SearchOpts {
    #[arg(long)]
    pub refine: bool,
    #[arg(long)]
    pub extra_45: bool,
    #[arg(long, value_enum, default_value = "raw")]
    pub score_mode: ScoreModeArg,
    #[arg(long, value_enum, default_value = "global")]
    pub refine_trigger: TriggerArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Database directory; defaults to the one recorded in the tree file.
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub iters: usize,
    #[command(flatten)]
    pub search: SearchOpts,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
    /// Per-iteration trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExhaustiveArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
    /// Number of equally spaced yaw angles.
    #[arg(long, default_value_t = 4)]
    pub angles: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineMethod {
    Greedy,
    NnRerank,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// Shortlist size for nn-rerank.
    #[arg(long, default_value_t = 25)]
    pub n: usize,
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Comma-separated: hoc@N, greedy, nn-rerank@N, exhaustive.
    #[arg(long, value_delimiter = ',', default_value = "hoc@100,greedy,nn-rerank@25")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub search: SearchOpts,
    #[command(flatten)]
    pub objective: ObjectiveOpts,
    /// Add a wall-clock column (makes the report machine dependent).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Exhaustive,
    Gt,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_enum)]
    pub reference: Reference,
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    pub k: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDb(a) => cmd_gen_db(&a),
        Command::GenScenes(a) => cmd_gen_scenes(&a),
        Command::BuildTree(a) => cmd_build_tree(&a),
        Command::Search(a) => cmd_search(&a),
        Command::Exhaustive(a) => cmd_exhaustive(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn cmd_gen_db(a: &GenDbArgs) -> Result<()> {
    let families = a.families.iter().map(|f| ShapeFamily::parse(f.trim())).collect::<hoc_core::Result<Vec<_>>>()?;
    let db = gen_database(&families, a.count, a.seed)?;
    let labels: Vec<String> = families.iter().map(|f| f.label().to_string()).collect();
    write_db(&a.out, &db, a.seed, &labels)?;
    Ok(())
}

fn cmd_gen_scenes(a: &GenScenesArgs) -> Result<()> {
    ensure!(a.count >= 1, "--count must be at least 1");
    let db = read_db(&a.db)?;
    let perturbed = a.perturb_yaw != 0.0 || a.perturb_trans != 0.0 || a.perturb_scale != 0.0 || a.axis_aligned;
    let opts = SceneOptions {
        rig: CameraRig { cameras: a.frames, ..CameraRig::default() },
        sigma: a.sigma,
        occluder_fraction: a.occluders,
        dropout: a.dropout,
        perturbation: perturbed.then_some(Perturbation {
            yaw_max: a.perturb_yaw.to_radians(),
            trans_frac: a.perturb_trans,
            scale_frac: a.perturb_scale,
            axis_aligned: a.axis_aligned,
        }),
        ..SceneOptions::default()
    };
    (0..a.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let (spec, gt) = random_scene_spec(&db, &opts, mix_seed(a.seed, i as u64))?;
        let scene = gen_scene(&db, &spec)?;
        let id = format!("scene_{i:04}");
        let stored = StoredScene { id: id.clone(), spec: Some(spec), ground_truth: Some(gt), scene };
        write_scene(&a.out.join(&id), &stored)?;
        Ok(())
    })
}

fn cmd_build_tree(a: &BuildTreeArgs) -> Result<()> {
    let db = read_db(&a.db)?;
    let tree = HocTree::build(
        &db,
        &TreeOptions { pose_angles: a.pose_angles.clone(), category_level: a.categories, k: a.k, seed: a.seed },
    )?;
    let file = TreeFile::from_tree(&tree, &a.db.to_string_lossy(), database_hash(&db));
    tree_file::write(&a.out, &file)?;
    Ok(())
}

/// The tree plus the database it was built from, checked against its hash.
fn load_tree_and_db(tree_path: &Path, db_override: Option<&Path>) -> Result<(TreeFile, HocTree, ShapeDatabase)> {
    let (file, tree) = tree_file::read(tree_path)?;
    let db_dir = match db_override {
        Some(d) => d.to_path_buf(),
        None => {
            let recorded = PathBuf::from(&file.db);
            let beside = tree_path.parent().unwrap_or(Path::new(".")).join(&recorded);
            if recorded.is_relative() && !recorded.join("db.json").exists() && beside.join("db.json").exists() {
                beside
            } else {
                recorded
            }
        }
    };
    let db = read_db(&db_dir).with_context(|| format!("loading the database for {}", tree_path.display()))?;
    let hash = format!("{:016x}", database_hash(&db));
    ensure!(
        hash == file.db_hash,
        "database {} (hash {hash}) is not the one the tree was built from ({})",
        db_dir.display(),
        file.db_hash
    );
    Ok((file, tree, db))
}

fn search_config(opts: &SearchOpts, objective: &ObjectiveOpts, iterations: usize) -> Result<SearchConfig> {
    let file = objective.config_file()?;
    let d = SearchConfig::default();
    let cfg = SearchConfig {
        iterations,
        lambda_start: file.lambda_start.unwrap_or(d.lambda_start),
        lambda_end: file.lambda_end.unwrap_or(d.lambda_end),
        seed: opts.seed,
        refine: opts.refine,
        refine_steps_incremental: file.refine_steps_incremental.unwrap_or(d.refine_steps_incremental),
        refine_steps_final: file.refine_steps_final.unwrap_or(d.refine_steps_final),
        extra_45: opts.extra_45,
        score_mode: match opts.score_mode {
            ScoreModeArg::Raw => ScoreMode::Raw,
            ScoreModeArg::Minmax => ScoreMode::MinMax,
        },
        refine_trigger: match opts.refine_trigger {
            TriggerArg::Global => RefineTrigger::GlobalBest,
            TriggerArg::Branch => RefineTrigger::BranchBest,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_search(a: &SearchArgs) -> Result<()> {
    let (_, mut tree, db) = load_tree_and_db(&a.tree, a.db.as_deref())?;
    let stored = read_scene(&a.scene)?;
    let weights = a.objective.weights()?;
    let prepared = PreparedScene::new(&stored.scene, a.objective.kind(), weights)?;
    let eval = Evaluator::new(&db, &prepared);
    let cfg = search_config(&a.search, &a.objective, a.iters)?;
    let r = hoc_search(&mut tree, &stored.scene.bbox, &eval, &cfg)?;
    if let Some(trace) = &a.trace {
        let mut lines = String::new();
        for t in &r.trace {
            lines.push_str(&serde_json::to_string(t)?);
            lines.push('\n');
        }
        crate::error::write(trace, lines.as_bytes())?;
    }
    let mut out =
        RunOutput::from_search(&stored.id, format!("hoc@{}", a.iters), "hoc", prepared.kind().name(), &r, tree.leaf_count());
    out.ground_truth = stored.ground_truth;
    report::write_run(&a.out, &out)?;
    Ok(())
}

/// `n` yaw angles evenly spaced over the full turn.
pub fn even_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| 360.0 * i as f64 / n as f64).collect()
}

fn cmd_exhaustive(a: &ExhaustiveArgs) -> Result<()> {
    ensure!(a.angles >= 1, "--angles must be at least 1");
    let db = read_db(&a.db)?;
    let stored = read_scene(&a.scene)?;
    let prepared = PreparedScene::new(&stored.scene, a.objective.kind(), a.objective.weights()?)?;
    let eval = Evaluator::new(&db, &prepared);
    let ranked = exhaustive_search(&db.ids(), &stored.scene.bbox, &even_angles(a.angles), &eval)?;
    let mut out =
        RunOutput::from_ranked(&stored.id, "exhaustive".into(), "exhaustive", prepared.kind().name(), &ranked, ranked.len());
    out.ground_truth = stored.ground_truth;
    report::write_run(&a.out, &out)?;
    Ok(())
}

fn cmd_baseline(a: &BaselineArgs) -> Result<()> {
    let (_, tree, db) = load_tree_and_db(&a.tree, a.db.as_deref())?;
    let stored = read_scene(&a.scene)?;
    let prepared = PreparedScene::new(&stored.scene, a.objective.kind(), a.objective.weights()?)?;
    let eval = Evaluator::new(&db, &prepared);
    let kind = prepared.kind().name();
    let mut out = match a.method {
        BaselineMethod::Greedy => {
            let r = greedy_search(&tree, &stored.scene.bbox, &eval)?;
            RunOutput::from_search(&stored.id, "greedy".into(), "greedy", kind, &r, tree.leaf_count())
        }
        BaselineMethod::NnRerank => {
            let ranked = nn_rerank(&db, &stored.scene.target_points, &stored.scene.bbox, &tree.pose_angles, &eval, a.n)?;
            RunOutput::from_ranked(&stored.id, format!("nn-rerank@{}", a.n), "nn-rerank", kind, &ranked, tree.leaf_count())
        }
    };
    out.ground_truth = stored.ground_truth;
    report::write_run(&a.out, &out)?;
    Ok(())
}

/// A benchmark method: `hoc@N`, `greedy`, `nn-rerank@N` or `exhaustive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Hoc(usize),
    Greedy,
    NnRerank(usize),
    Exhaustive,
}

impl MethodSpec {
    pub fn parse(s: &str) -> Result<MethodSpec> {
        let (name, arg) = match s.trim().split_once('@') {
            Some((n, v)) => (n, Some(v.parse::<usize>().with_context(|| format!("bad budget in method '{s}'"))?)),
            None => (s.trim(), None),
        };
        Ok(match (name, arg) {
            ("hoc", Some(n)) if n > 0 => MethodSpec::Hoc(n),
            ("greedy", None) => MethodSpec::Greedy,
            ("nn-rerank", Some(n)) if n > 0 => MethodSpec::NnRerank(n),
            ("exhaustive", None) => MethodSpec::Exhaustive,
            _ => bail!("unknown method '{s}' (expected hoc@N, greedy, nn-rerank@N or exhaustive)"),
        })
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::Hoc(n) => format!("hoc@{n}"),
            MethodSpec::Greedy => "greedy".into(),
            MethodSpec::NnRerank(n) => format!("nn-rerank@{n}"),
            MethodSpec::Exhaustive => "exhaustive".into(),
        }
    }
}

struct MethodRun {
    best: Candidate,
    evaluations: usize,
    objective_calls: u64,
    wall_ms: f64,
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let methods = a.methods.iter().map(|m| MethodSpec::parse(m)).collect::<Result<Vec<_>>>()?;
    ensure!(!methods.is_empty(), "--methods is empty");
    let (_, tree, db) = load_tree_and_db(&a.tree, a.db.as_deref())?;
    let scene_dirs = list_scenes(&a.scenes)?;
    ensure!(!scene_dirs.is_empty(), "no scene directories under {}", a.scenes.display());
    let weights = a.objective.weights()?;
    let kind = a.objective.kind();
    let per_scene: Vec<Vec<QueryRecord>> =
        scene_dirs.par_iter().map(|dir| bench_scene(a, &methods, &tree, &db, dir, kind, weights)).collect::<Result<_>>()?;
    let records: Vec<QueryRecord> = per_scene.into_iter().flatten().collect();
    let report = EvalReport { version: REPORT_VERSION, objective: kind.name().into(), aggregates: aggregate(&records), records };
    report::write_report(&a.out, &report)?;
    Ok(())
}

fn bench_scene(
    a: &BenchArgs,
    methods: &[MethodSpec],
    tree: &HocTree,
    db: &ShapeDatabase,
    dir: &Path,
    kind: ObjectiveKind,
    weights: ObjectiveWeights,
) -> Result<Vec<QueryRecord>> {
    let stored = read_scene(dir)?;
    let bbox = &stored.scene.bbox;
    let prepared = PreparedScene::new(&stored.scene, kind, weights)?;
    let eval = Evaluator::new(db, &prepared);
    let t0 = Instant::now();
    let reference = exhaustive_search(&db.ids(), bbox, &tree.pose_angles, &eval)?;
    let reference_ms = t0.elapsed().as_secs_f64() * 1e3;
    let mut seen = std::collections::BTreeSet::new();
    let top5: Vec<_> = reference.iter().filter(|c| seen.insert(c.shape)).take(5).map(|c| c.shape).collect();
    let mut records = Vec::with_capacity(methods.len());
    for m in methods {
        let t = Instant::now();
        let run = match *m {
            MethodSpec::Hoc(n) => {
                let mut tree = tree.clone();
                let r = hoc_search(&mut tree, bbox, &eval, &search_config(&a.search, &a.objective, n)?)?;
                MethodRun { best: r.best, evaluations: r.evaluations, objective_calls: r.objective_calls, wall_ms: 0.0 }
            }
            MethodSpec::Greedy => {
                let r = greedy_search(tree, bbox, &eval)?;
                MethodRun { best: r.best, evaluations: r.evaluations, objective_calls: r.objective_calls, wall_ms: 0.0 }
            }
            MethodSpec::NnRerank(n) => {
                let ranked = nn_rerank(db, &stored.scene.target_points, bbox, &tree.pose_angles, &eval, n)?;
                MethodRun { best: ranked[0], evaluations: ranked.len(), objective_calls: ranked.len() as u64, wall_ms: 0.0 }
            }
            MethodSpec::Exhaustive => MethodRun {
                best: reference[0],
                evaluations: reference.len(),
                objective_calls: reference.len() as u64,
                wall_ms: reference_ms,
            },
        };
        let wall_ms = if *m == MethodSpec::Exhaustive { run.wall_ms } else { t.elapsed().as_secs_f64() * 1e3 };
        let chamfer_to_gt = match stored.ground_truth {
            Some(gt) => Some(placement_chamfer(
                db,
                &Placement { shape: run.best.shape, pose: run.best.pose },
                &Placement { shape: gt.shape, pose: gt.pose },
                DEFAULT_SAMPLE_DENSITY,
                mix_seed(a.search.seed, 0xc4a3),
            )?),
            None => None,
        };
        records.push(QueryRecord {
            query: stored.id.clone(),
            method: m.label(),
            best_shape: run.best.shape,
            best_angle: run.best.angle_deg,
            loss: run.best.loss,
            evaluations: run.evaluations,
            objective_calls: run.objective_calls,
            exhaustive_evaluations: reference.len(),
            speedup: speedup(reference.len(), run.evaluations),
            top1: top5.first() == Some(&run.best.shape),
            top5: top5.contains(&run.best.shape),
            chamfer_to_gt,
            wall_ms: a.timing.then_some(wall_ms),
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub version: u64,
    pub reference: String,
    pub methods: Vec<MethodMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub queries: usize,
    /// Keyed by k.
    pub topk_ra: BTreeMap<usize, f64>,
    pub mean_evaluations: f64,
    /// Relative to exhaustive evaluation counts on the same queries.
    pub speedup: f64,
}

pub const METRICS_VERSION: u64 = 1;

/// Top-k accuracy per method over the run files in a directory.
///
/// Against `exhaustive`, a query counts when the method's best shape is among
/// the exhaustive top-k shapes. Against `gt`, it counts when the true shape
/// is among the method's top-k shapes.
pub fn evaluate_runs(runs: &[RunOutput], reference: Reference, ks: &[usize]) -> Result<MetricsFile> {
    ensure!(!runs.is_empty(), "no result files");
    ensure!(ks.iter().all(|&k| k >= 1), "k must be at least 1");
    let exhaustive: BTreeMap<&str, &RunOutput> =
        runs.iter().filter(|r| r.method == "exhaustive").map(|r| (r.query.as_str(), r)).collect();
    let mut by_label: BTreeMap<&str, Vec<&RunOutput>> = BTreeMap::new();
    for r in runs.iter().filter(|r| reference == Reference::Gt || r.method != "exhaustive") {
        by_label.entry(&r.label).or_default().push(r);
    }
    let mut methods = Vec::new();
    for (label, rows) in by_label {
        let mut topk = BTreeMap::new();
        for &k in ks {
            let value = match reference {
                Reference::Exhaustive => {
                    let mut lists = Vec::new();
                    let mut picks = Vec::new();
                    for r in &rows {
                        let ex = exhaustive
                            .get(r.query.as_str())
                            .with_context(|| format!("no exhaustive result for query {}", r.query))?;
                        lists.push(ex.top_shapes(k));
                        picks.push(r.best.shape);
                    }
                    topk_ra(&lists, &picks, k)?
                }
                Reference::Gt => {
                    let missing: Vec<&str> = rows.iter().filter(|r| r.ground_truth.is_none()).map(|r| r.query.as_str()).collect();
                    if !missing.is_empty() {
                        return Err(hoc_core::Error::MissingGroundTruth(missing.join(", ")).into());
                    }
                    let lists: Vec<_> = rows.iter().map(|r| r.top_shapes(k)).collect();
                    let truth: Vec<_> = rows.iter().map(|r| r.ground_truth.expect("checked").shape).collect();
                    topk_ra(&lists, &truth, k)?
                }
            };
            topk.insert(k, value);
        }
        let evals: usize = rows.iter().map(|r| r.evaluations).sum();
        let leaves: usize = rows.iter().map(|r| r.leaves).sum();
        methods.push(MethodMetrics {
            method: label.to_string(),
            queries: rows.len(),
            topk_ra: topk,
            mean_evaluations: evals as f64 / rows.len() as f64,
            speedup: speedup(leaves, evals),
        });
    }
    Ok(MetricsFile { version: METRICS_VERSION, reference: format!("{reference:?}").to_lowercase(), methods })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&a.results)
        .with_context(|| format!("reading {}", a.results.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let runs = paths.iter().map(|p| report::read_run(p)).collect::<crate::error::Result<Vec<_>>>()?;
    let metrics = evaluate_runs(&runs, a.reference, &a.k)?;
    crate::error::write_json(&a.out, &metrics)?;
    Ok(())
}
