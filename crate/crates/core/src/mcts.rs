//! Anytime tree search over a [`HocTree`], the exhaustive, greedy and
//! descriptor re-ranking baselines, and 9-DOF pose refinement.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::database::{ShapeDatabase, ShapeId, ShapeRecord};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, PointCloud, Pose};
use crate::hoctree::HocTree;
use crate::math::{self, Mat3, Point3};
use crate::objective::PreparedScene;
use crate::shapedesc::descriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ScoreMode {
    /// UCB sees `-loss` directly.
    Raw,
    /// Scores are rescaled to `[0, 1]` over the range observed so far.
    MinMax,
}

/// When incremental refinement runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RefineTrigger {
    GlobalBest,
    BranchBest,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchConfig {
    pub iterations: usize,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub seed: u64,
    pub refine: bool,
    pub refine_steps_incremental: usize,
    pub refine_steps_final: usize,
    pub extra_45: bool,
    pub score_mode: ScoreMode,
    pub refine_trigger: RefineTrigger,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 800,
            lambda_start: 20.0,
            lambda_end: 1.0,
            seed: 0,
            refine: false,
            refine_steps_incremental: 150,
            refine_steps_final: 800,
            extra_45: false,
            score_mode: ScoreMode::Raw,
            refine_trigger: RefineTrigger::GlobalBest,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if !(self.lambda_end >= 0.0 && self.lambda_start >= self.lambda_end && self.lambda_start.is_finite()) {
            return Err(Error::InvalidArgument("need lambda_start >= lambda_end >= 0".into()));
        }
        Ok(())
    }

    /// Exploration weight at 1-based iteration `i`, linear from start to end.
    pub fn lambda(&self, i: usize) -> f64 {
        if i <= 1 {
            return self.lambda_start;
        }
        if i >= self.iterations {
            return self.lambda_end;
        }
        let denom = (self.iterations - 1).max(1) as f64;
        self.lambda_start + (i - 1) as f64 / denom * (self.lambda_end - self.lambda_start)
    }
}

/// `score + lambda * sqrt(ln(parent_visits) / visits)`.
pub fn ucb(score: f64, visits: u64, parent_visits: u64, lambda: f64) -> f64 {
    debug_assert!(visits >= 1 && parent_visits >= visits);
    score + lambda * math::sqrt(math::ln(parent_visits as f64) / visits as f64)
}

pub struct Refined {
    pub pose: Pose,
    pub loss: f64,
    /// Objective evaluations spent.
    pub calls: u64,
    /// Loss after each accepted step, starting with the input loss.
    pub history: Vec<f64>,
}

/// Something that scores a shape at a pose. Refinement is optional.
pub trait Evaluate {
    fn loss(&self, shape: ShapeId, pose: &Pose) -> Result<f64>;

    fn refine(&self, _shape: ShapeId, pose: &Pose, loss: f64, _steps: usize, _seed: u64) -> Result<Refined> {
        Ok(Refined { pose: *pose, loss, calls: 0, history: vec![loss] })
    }
}

/// Database-backed evaluator over a prepared scene.
pub struct Evaluator<'a> {
    pub db: &'a ShapeDatabase,
    pub scene: &'a PreparedScene<'a>,
    pub refine_options: RefineOptions,
}

impl<'a> Evaluator<'a> {
    pub fn new(db: &'a ShapeDatabase, scene: &'a PreparedScene<'a>) -> Evaluator<'a> {
        Evaluator { db, scene, refine_options: RefineOptions::default() }
    }
}

impl Evaluate for Evaluator<'_> {
    fn loss(&self, shape: ShapeId, pose: &Pose) -> Result<f64> {
        self.scene.loss(self.db.get(shape)?, pose)
    }

    fn refine(&self, shape: ShapeId, pose: &Pose, loss: f64, steps: usize, seed: u64) -> Result<Refined> {
        refine_pose_from(self.db.get(shape)?, pose, loss, self.scene, steps, seed, &self.refine_options)
    }
}

/// Counts loss calls made through it.
struct Counting<'e, E: ?Sized> {
    inner: &'e E,
    calls: Cell<u64>,
}

impl<E: Evaluate + ?Sized> Counting<'_, E> {
    fn loss(&self, shape: ShapeId, pose: &Pose) -> Result<f64> {
        self.calls.set(self.calls.get() + 1);
        self.inner.loss(shape, pose)
    }

    fn refine(&self, shape: ShapeId, pose: &Pose, loss: f64, steps: usize, seed: u64) -> Result<Refined> {
        let r = self.inner.refine(shape, pose, loss, steps, seed)?;
        self.calls.set(self.calls.get() + r.calls);
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Candidate {
    pub shape: ShapeId,
    pub angle_deg: f64,
    pub pose: Pose,
    pub loss: f64,
}

impl Candidate {
    /// Ascending loss, then shape id, then angle.
    pub fn rank_cmp(&self, other: &Candidate) -> Ordering {
        self.loss.total_cmp(&other.loss).then(self.shape.cmp(&other.shape)).then(self.angle_deg.total_cmp(&other.angle_deg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iter: usize,
    pub leaf: usize,
    pub shape: ShapeId,
    pub angle: f64,
    pub loss: f64,
    pub score: f64,
    pub best_so_far: f64,
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchResult {
    pub best: Candidate,
    /// Highest evaluation score in the trace.
    pub best_score: f64,
    /// Distinct leaves evaluated.
    pub evaluations: usize,
    /// Objective calls including refinement.
    pub objective_calls: u64,
    /// Best candidate per distinct shape, best first.
    pub ranking: Vec<Candidate>,
    pub trace: Vec<TraceRecord>,
}

impl SearchResult {
    pub fn top_shapes(&self, k: usize) -> Vec<ShapeId> {
        self.ranking.iter().take(k).map(|c| c.shape).collect()
    }
}

/// Keeps the best candidate per shape.
#[derive(Default)]
struct ShapeBoard(BTreeMap<ShapeId, Candidate>);

impl ShapeBoard {
    fn offer(&mut self, c: Candidate) {
        match self.0.get(&c.shape) {
            Some(old) if old.rank_cmp(&c) != Ordering::Greater => {}
            _ => {
                self.0.insert(c.shape, c);
            }
        }
    }

    fn ranked(self) -> Vec<Candidate> {
        let mut v: Vec<Candidate> = self.0.into_values().collect();
        v.sort_by(Candidate::rank_cmp);
        v
    }
}

/// Monte Carlo tree search with UCB selection, uniform rollouts, max backup
/// and leaf locking. Statistics are reset on entry and left in `tree` on exit.
pub fn hoc_search<E: Evaluate + ?Sized>(
    tree: &mut HocTree,
    bbox: &OrientedBox,
    eval: &E,
    config: &SearchConfig,
) -> Result<SearchResult> {
    config.validate()?;
    bbox.validate()?;
    tree.reset_stats();
    let eval = Counting { inner: eval, calls: Cell::new(0) };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut slots: Vec<Pose> = tree.branches.iter().map(|b| bbox.rotated_pose(b.angle_deg)).collect();
    let mut branch_best: Vec<f64> = vec![f64::INFINITY; tree.branches.len()];
    let mut best: Option<Candidate> = None;
    let mut board = ShapeBoard::default();
    let mut trace = Vec::new();
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut path = Vec::new();

    for iter in 1..=config.iterations {
        if tree.nodes[0].stats.locked {
            break;
        }
        let lambda = config.lambda(iter);
        select_path(tree, lambda, config.score_mode, range, &mut rng, &mut path);
        let leaf = *path.last().expect("path starts at the root");
        let shape = tree.nodes[leaf].shape().expect("selection ends at a leaf");
        let branch = tree.nodes[leaf].branch.expect("leaf has a branch");
        let base_angle = tree.branches[branch].angle_deg;
        let pose = slots[branch];
        let wrap = |e: Error| Error::Evaluation { iteration: iter, leaf, source: alloc::boxed::Box::new(e) };
        let mut cand = Candidate { shape, angle_deg: base_angle, pose, loss: eval.loss(shape, &pose).map_err(wrap)? };
        if config.extra_45 {
            let alt = pose.rotated_about_z(core::f64::consts::FRAC_PI_4);
            let loss = eval.loss(shape, &alt).map_err(wrap)?;
            if loss < cand.loss {
                cand = Candidate { shape, angle_deg: base_angle + 45.0, pose: alt, loss };
            }
        }
        let score = -cand.loss;
        range = (range.0.min(score), range.1.max(score));
        backup(tree, &path, score);
        board.offer(cand);

        let new_global = best.as_ref().is_none_or(|b| cand.rank_cmp(b) == Ordering::Less);
        let new_branch = cand.loss < branch_best[branch];
        branch_best[branch] = branch_best[branch].min(cand.loss);
        if new_global {
            best = Some(cand);
        }
        let trigger = match config.refine_trigger {
            RefineTrigger::GlobalBest => new_global,
            RefineTrigger::BranchBest => new_branch,
        };
        let mut refined = false;
        if config.refine && trigger && config.refine_steps_incremental > 0 {
            let r = eval
                .refine(shape, &cand.pose, cand.loss, config.refine_steps_incremental, math::mix_seed(config.seed, iter as u64))
                .map_err(wrap)?;
            slots[branch] =
                if cand.angle_deg == base_angle { r.pose } else { r.pose.rotated_about_z(-core::f64::consts::FRAC_PI_4) };
            let rc = Candidate { pose: r.pose, loss: r.loss, ..cand };
            board.offer(rc);
            branch_best[branch] = branch_best[branch].min(rc.loss);
            if best.as_ref().is_none_or(|b| rc.rank_cmp(b) == Ordering::Less) {
                best = Some(rc);
            }
            refined = true;
        }
        trace.push(TraceRecord {
            iter,
            leaf,
            shape,
            angle: cand.angle_deg,
            loss: cand.loss,
            score,
            best_so_far: best.map_or(f64::INFINITY, |b| b.loss),
            refined,
        });
    }

    let mut best = best.ok_or(Error::EmptyDatabase)?;
    if config.refine && config.refine_steps_final > 0 {
        let r =
            eval.refine(best.shape, &best.pose, best.loss, config.refine_steps_final, math::mix_seed(config.seed, u64::MAX))?;
        if r.loss < best.loss {
            best = Candidate { pose: r.pose, loss: r.loss, ..best };
            board.offer(best);
        }
    }
    let best_score = trace.iter().map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
    Ok(SearchResult {
        best,
        best_score,
        evaluations: trace.len(),
        objective_calls: eval.calls.get(),
        ranking: board.ranked(),
        trace,
    })
}

fn select_path(tree: &HocTree, lambda: f64, mode: ScoreMode, range: (f64, f64), rng: &mut ChaCha8Rng, path: &mut Vec<usize>) {
    path.clear();
    let mut node = 0usize;
    path.push(node);
    let mut open: Vec<usize> = Vec::new();
    loop {
        let n = &tree.nodes[node];
        if n.is_leaf() {
            return;
        }
        open.clear();
        open.extend(n.children.iter().copied().filter(|&c| !tree.nodes[c].stats.locked && tree.nodes[c].stats.visits == 0));
        if !open.is_empty() {
            // simulation: uniform descent through unvisited territory
            node = open[rng.random_range(0..open.len())];
            path.push(node);
            while !tree.nodes[node].is_leaf() {
                let ch = &tree.nodes[node].children;
                node = ch[rng.random_range(0..ch.len())];
                path.push(node);
            }
            return;
        }
        let parent_visits = n.stats.visits;
        let mut pick: Option<(usize, f64)> = None;
        for &c in &n.children {
            let s = &tree.nodes[c].stats;
            if s.locked {
                continue;
            }
            let score = match mode {
                ScoreMode::Raw => s.score,
                ScoreMode::MinMax => {
                    if range.1 > range.0 {
                        (s.score - range.0) / (range.1 - range.0)
                    } else {
                        0.5
                    }
                }
            };
            let u = ucb(score, s.visits, parent_visits, lambda);
            if pick.is_none_or(|(_, best)| u > best) {
                pick = Some((c, u));
            }
        }
        node = pick.expect("an unlocked node has an unlocked child").0;
        path.push(node);
    }
}

fn backup(tree: &mut HocTree, path: &[usize], score: f64) {
    for &i in path {
        let s = &mut tree.nodes[i].stats;
        s.visits += 1;
        if score > s.score {
            s.score = score;
        }
    }
    for &i in path.iter().rev() {
        let done = tree.nodes[i].is_leaf() || tree.nodes[i].children.iter().all(|&c| tree.nodes[c].stats.locked);
        if !done {
            break;
        }
        tree.nodes[i].stats.locked = true;
    }
}

/// Every shape at every angle, best first.
pub fn exhaustive_search<E: Evaluate + ?Sized>(
    ids: &[ShapeId],
    bbox: &OrientedBox,
    angles: &[f64],
    eval: &E,
) -> Result<Vec<Candidate>> {
    if ids.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut out = Vec::with_capacity(ids.len() * angles.len());
    for &shape in ids {
        for &angle_deg in angles {
            let pose = bbox.rotated_pose(angle_deg);
            out.push(Candidate { shape, angle_deg, pose, loss: eval.loss(shape, &pose)? });
        }
    }
    out.sort_by(Candidate::rank_cmp);
    Ok(out)
}

/// Distinct shapes of a ranked candidate list, in order.
pub fn distinct_shapes(ranked: &[Candidate]) -> Vec<ShapeId> {
    let mut seen = Vec::new();
    for c in ranked {
        if !seen.contains(&c.shape) {
            seen.push(c.shape);
        }
    }
    seen
}

/// Per pose branch: score each child's centroid and descend into the best.
/// Returns the best of the reached leaves.
pub fn greedy_search<E: Evaluate + ?Sized>(tree: &HocTree, bbox: &OrientedBox, eval: &E) -> Result<SearchResult> {
    let eval = Counting { inner: eval, calls: Cell::new(0) };
    let mut cache: BTreeMap<(usize, ShapeId), f64> = BTreeMap::new();
    let mut trace = Vec::new();
    let mut board = ShapeBoard::default();
    let mut reached: Vec<Candidate> = Vec::new();
    for (b, br) in tree.branches.iter().enumerate() {
        let pose = bbox.rotated_pose(br.angle_deg);
        let mut node = br.node;
        while !tree.nodes[node].is_leaf() {
            let mut pick: Option<(usize, f64)> = None;
            for &c in &tree.nodes[node].children {
                let shape = tree.centroid(c).expect("cluster nodes have centroids");
                let loss = match cache.get(&(b, shape)) {
                    Some(&l) => l,
                    None => {
                        let l = eval.loss(shape, &pose)?;
                        cache.insert((b, shape), l);
                        board.offer(Candidate { shape, angle_deg: br.angle_deg, pose, loss: l });
                        trace.push(TraceRecord {
                            iter: trace.len() + 1,
                            leaf: c,
                            shape,
                            angle: br.angle_deg,
                            loss: l,
                            score: -l,
                            best_so_far: 0.0,
                            refined: false,
                        });
                        l
                    }
                };
                if pick.is_none_or(|(_, best)| loss < best) {
                    pick = Some((c, loss));
                }
            }
            node = pick.expect("internal nodes have children").0;
        }
        let shape = tree.nodes[node].shape().expect("leaf");
        reached.push(Candidate { shape, angle_deg: br.angle_deg, pose, loss: cache[&(b, shape)] });
    }
    reached.sort_by(Candidate::rank_cmp);
    let best = *reached.first().ok_or(Error::EmptyDatabase)?;
    let mut running = f64::INFINITY;
    for t in &mut trace {
        running = running.min(t.loss);
        t.best_so_far = running;
    }
    // reached leaves first, then everything else that was scored
    let mut ranking = Vec::new();
    for c in reached.iter().chain(board.ranked().iter()) {
        if !ranking.iter().any(|r: &Candidate| r.shape == c.shape) {
            ranking.push(*c);
        }
    }
    let best_score = trace.iter().map(|t| t.score).fold(f64::NEG_INFINITY, f64::max);
    Ok(SearchResult { best, best_score, evaluations: trace.len(), objective_calls: eval.calls.get(), ranking, trace })
}

/// Descriptor distance of every shape to the target, minimized over the
/// box proposals; ascending, ties by id.
pub fn descriptor_ranking(
    db: &ShapeDatabase,
    target: &PointCloud,
    bbox: &OrientedBox,
    angles: &[f64],
) -> Result<Vec<(ShapeId, f64)>> {
    let mut target_desc = Vec::with_capacity(angles.len());
    for &a in angles {
        let xf = bbox.rotated_pose(a).transform();
        let canonical: PointCloud = target.iter().map(|&p| xf.apply_inverse(p)).collect();
        target_desc.push(descriptor(&canonical)?);
    }
    let mut out: Vec<(ShapeId, f64)> = db
        .records()
        .iter()
        .map(|r| (r.id, target_desc.iter().map(|d| d.distance(r.descriptor())).fold(f64::INFINITY, f64::min)))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Nearest `n` shapes by descriptor, re-scored at every angle with the
/// expensive objective. `n` is clamped to the database size.
pub fn nn_rerank<E: Evaluate + ?Sized>(
    db: &ShapeDatabase,
    target: &PointCloud,
    bbox: &OrientedBox,
    angles: &[f64],
    eval: &E,
    n: usize,
) -> Result<Vec<Candidate>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let shortlist: Vec<ShapeId> =
        descriptor_ranking(db, target, bbox, angles)?.into_iter().take(n.clamp(1, db.len())).map(|(id, _)| id).collect();
    exhaustive_search(&shortlist, bbox, angles, eval)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Target points used for correspondences per step.
    pub correspondences: usize,
    pub initial_damping: f64,
    pub max_damping: f64,
    /// Smallest scale the refinement may produce, in meters.
    pub min_scale: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { correspondences: 600, initial_damping: 1e-3, max_damping: 1e4, min_scale: 1e-3 }
    }
}

/// Refines all nine pose parameters. Each step fixes nearest-neighbour
/// correspondences from target points to model samples, takes a damped
/// Gauss-Newton step on the point-to-point residuals, and keeps it only if
/// the full objective drops.
pub fn refine_pose(shape: &ShapeRecord, pose: &Pose, scene: &PreparedScene<'_>, steps: usize, seed: u64) -> Result<Refined> {
    let loss = scene.loss(shape, pose)?;
    let mut r = refine_pose_from(shape, pose, loss, scene, steps, seed, &RefineOptions::default())?;
    r.calls += 1;
    Ok(r)
}

pub(crate) fn refine_pose_from(
    shape: &ShapeRecord,
    pose: &Pose,
    loss: f64,
    scene: &PreparedScene<'_>,
    steps: usize,
    seed: u64,
    opts: &RefineOptions,
) -> Result<Refined> {
    let target = scene.target().points();
    let mut cur = *pose;
    let mut cur_loss = loss;
    let mut history = vec![loss];
    let mut calls = 0u64;
    let mut damping = opts.initial_damping;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if target.is_empty() {
        return Ok(Refined { pose: cur, loss, calls, history });
    }
    for _ in 0..steps {
        let Some(delta) = gauss_newton_step(shape, &cur, target, damping, opts.correspondences, &mut rng) else {
            break;
        };
        let mut accepted = false;
        for alpha in [1.0, 0.5] {
            let mut p = cur.to_params();
            for (x, d) in p.iter_mut().zip(&delta) {
                *x += alpha * d;
            }
            for s in &mut p[..3] {
                *s = s.max(opts.min_scale);
            }
            let trial = Pose::from_params(&p);
            if trial.validate().is_err() {
                continue;
            }
            calls += 1;
            let l = scene.loss(shape, &trial)?;
            if l < cur_loss {
                cur = trial;
                cur_loss = l;
                history.push(l);
                accepted = true;
                break;
            }
        }
        if accepted {
            damping = (damping / 3.0).max(1e-9);
        } else {
            damping *= 10.0;
            if damping > opts.max_damping {
                break;
            }
        }
    }
    Ok(Refined { pose: cur, loss: cur_loss, calls, history })
}

fn gauss_newton_step(
    shape: &ShapeRecord,
    pose: &Pose,
    target: &[Point3],
    damping: f64,
    max_points: usize,
    rng: &mut ChaCha8Rng,
) -> Option<[f64; 9]> {
    let xf = pose.transform();
    let (rx, ry, rz) = (Mat3::rot_x(pose.rotation.x), Mat3::rot_y(pose.rotation.y), Mat3::rot_z(pose.rotation.z));
    let d_rx = rz.mul_mat(&ry).mul_mat(&Mat3::d_rot_x(pose.rotation.x));
    let d_ry = rz.mul_mat(&Mat3::d_rot_y(pose.rotation.y)).mul_mat(&rx);
    let d_rz = Mat3::d_rot_z(pose.rotation.z).mul_mat(&ry).mul_mat(&rx);
    let samples = shape.samples().points();
    let mut jtj = [[0.0; 9]; 9];
    let mut jtr = [0.0; 9];
    let n = target.len().min(max_points);
    for _ in 0..n {
        let p = target[rng.random_range(0..target.len())];
        let (ci, _) = shape.index().nearest_weighted(xf.apply_inverse(p), xf.scale)?;
        let c = samples[ci];
        let sc = c.component_mul(xf.scale);
        let r = xf.apply(c) - p;
        let cols: [Point3; 9] = [
            xf.rotation.col(0) * c.x,
            xf.rotation.col(1) * c.y,
            xf.rotation.col(2) * c.z,
            d_rx.mul_vec(sc),
            d_ry.mul_vec(sc),
            d_rz.mul_vec(sc),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        for a in 0..9 {
            jtr[a] += cols[a].dot(r);
            for b in a..9 {
                jtj[a][b] += cols[a].dot(cols[b]);
            }
        }
    }
    for a in 0..9 {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    let mut lhs = jtj;
    for (a, row) in lhs.iter_mut().enumerate() {
        row[a] += damping * jtj[a][a] + 1e-9 * n as f64;
    }
    let rhs = jtr.map(|x| -x);
    let delta = math::solve_spd(&lhs, &rhs)?;
    delta.iter().all(|d| d.is_finite()).then_some(delta)
}
