//! Occupancy-histogram shape descriptor, seeded k-means and the recursive
//! clustering that forms the model levels of the search tree.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::database::ShapeId;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::math::{self, Point3};

pub const GRID: usize = 4;
pub const HISTOGRAM_DIM: usize = GRID * GRID * GRID;
pub const DESCRIPTOR_DIM: usize = HISTOGRAM_DIM + 3;
pub const KMEANS_MAX_ITERATIONS: usize = 100;

/// 4x4x4 normalized occupancy histogram followed by three aspect ratios.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    pub fn from_vec(v: Vec<f64>) -> Result<Descriptor> {
        if v.len() != DESCRIPTOR_DIM {
            return Err(Error::InvalidArgument(alloc::format!("descriptor has {} entries, expected {DESCRIPTOR_DIM}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("descriptor"));
        }
        Ok(Descriptor(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn histogram(&self) -> &[f64] {
        &self.0[..HISTOGRAM_DIM]
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        math::sqrt(squared_distance(&self.0, &other.0))
    }
}

impl AsRef<[f64]> for Descriptor {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Descriptor of a cloud: scale uniformly so the longest side is 1, center
/// in the unit cube, bin, L1-normalize, then append the side ratios.
pub fn descriptor(cloud: &PointCloud) -> Result<Descriptor> {
    let (lo, hi) = cloud.bounds().ok_or(Error::EmptyCloud)?;
    let ext = hi - lo;
    let longest = ext.max_component();
    let center = (lo + hi) * 0.5;
    let mut hist = vec![0.0; DESCRIPTOR_DIM];
    let bin = |v: f64| -> usize {
        let u = if longest > 0.0 { v / longest + 0.5 } else { 0.5 };
        let b = math::floor(u.clamp(0.0, 1.0) * GRID as f64) as usize;
        b.min(GRID - 1)
    };
    for &p in cloud.iter() {
        let d = p - center;
        let (bx, by, bz) = (bin(d.x), bin(d.y), bin(d.z));
        hist[(bx * GRID + by) * GRID + bz] += 1.0;
    }
    let n = cloud.len() as f64;
    for h in hist.iter_mut().take(HISTOGRAM_DIM) {
        *h /= n;
    }
    let aspect = if longest > 0.0 { ext * (1.0 / longest) } else { Point3::ZERO };
    hist[HISTOGRAM_DIM] = aspect.x;
    hist[HISTOGRAM_DIM + 1] = aspect.y;
    hist[HISTOGRAM_DIM + 2] = aspect.z;
    Ok(Descriptor(hist))
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    /// Sum of squared distances to the assigned means after each update.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia<V: AsRef<[f64]>>(&self, vectors: &[V]) -> f64 {
        vectors.iter().zip(&self.assignments).map(|(v, &a)| squared_distance(v.as_ref(), &self.means[a])).sum()
    }
}

/// Lloyd's algorithm from k-means++ seeding. With `n <= k` every vector is
/// its own cluster.
pub fn kmeans<V: AsRef<[f64]>>(vectors: &[V], k: usize, seed: u64) -> KMeans {
    let n = vectors.len();
    if n == 0 || k == 0 {
        return KMeans { assignments: Vec::new(), means: Vec::new(), inertia_history: Vec::new() };
    }
    if n <= k {
        return KMeans {
            assignments: (0..n).collect(),
            means: vectors.iter().map(|v| v.as_ref().to_vec()).collect(),
            inertia_history: vec![0.0],
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = plus_plus_init(vectors, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut next: Vec<usize> = vectors.iter().map(|v| nearest_mean(v.as_ref(), &means)).collect();
        repair_empty_clusters(vectors, &mut next, &mut means, k);
        if next == assignments {
            break;
        }
        assignments = next;
        means = recompute_means(vectors, &assignments, k);
        history.push(vectors.iter().zip(&assignments).map(|(v, &a)| squared_distance(v.as_ref(), &means[a])).sum());
    }
    KMeans { assignments, means, inertia_history: history }
}

fn plus_plus_init<V: AsRef<[f64]>>(vectors: &[V], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut d2: Vec<f64> = vectors.iter().map(|v| squared_distance(v.as_ref(), vectors[first].as_ref())).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                if acc > r {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave r just past the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        for (i, v) in vectors.iter().enumerate() {
            let d = squared_distance(v.as_ref(), vectors[pick].as_ref());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen.into_iter().map(|i| vectors[i].as_ref().to_vec()).collect()
}

fn nearest_mean(v: &[f64], means: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, m) in means.iter().enumerate() {
        let d = squared_distance(v, m);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Moves the farthest member of the largest cluster into each empty cluster.
fn repair_empty_clusters<V: AsRef<[f64]>>(vectors: &[V], assign: &mut [usize], means: &mut [Vec<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
        let mut far = (usize::MAX, -1.0);
        for (i, v) in vectors.iter().enumerate() {
            if assign[i] == largest {
                let d = squared_distance(v.as_ref(), &means[largest]);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        assign[far.0] = empty;
        means[empty] = vectors[far.0].as_ref().to_vec();
    }
}

fn recompute_means<V: AsRef<[f64]>>(vectors: &[V], assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = vectors[0].as_ref().len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &a) in vectors.iter().zip(assign) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(v.as_ref()) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for x in s.iter_mut() {
            *x /= c.max(1) as f64;
        }
    }
    sums
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterNode {
    pub members: Vec<ShapeId>,
    pub children: Vec<usize>,
    pub centroid: ShapeId,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Arena-backed cluster hierarchy; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterTree {
    pub nodes: Vec<ClusterNode>,
}

impl ClusterTree {
    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    /// Leaf shape ids in depth-first order.
    pub fn leaves(&self) -> Vec<ShapeId> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.is_leaf() {
                out.push(node.members[0]);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(t: &ClusterTree, i: usize) -> usize {
            t.nodes[i].children.iter().map(|&c| 1 + walk(t, c)).max().unwrap_or(0)
        }
        walk(self, 0)
    }
}

/// Recursive k-means over descriptors. Clusters of at most `k` members get
/// one leaf child per member.
pub fn hierarchical_cluster<V: AsRef<[f64]>>(ids: &[ShapeId], vectors: &[V], k: usize, seed: u64) -> Result<ClusterTree> {
    if ids.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if ids.len() != vectors.len() {
        return Err(Error::InvalidArgument("ids and descriptors differ in length".into()));
    }
    if k < 2 {
        return Err(Error::InvalidArgument("cluster fan-out k must be at least 2".into()));
    }
    let mut tree = ClusterTree { nodes: Vec::new() };
    let members: Vec<usize> = (0..ids.len()).collect();
    build_cluster(&mut tree, ids, vectors, members, k, seed);
    Ok(tree)
}

fn build_cluster<V: AsRef<[f64]>>(
    tree: &mut ClusterTree,
    ids: &[ShapeId],
    vectors: &[V],
    members: Vec<usize>,
    k: usize,
    seed: u64,
) -> usize {
    let node_index = tree.nodes.len();
    let member_ids: Vec<ShapeId> = members.iter().map(|&i| ids[i]).collect();
    let member_vecs: Vec<&[f64]> = members.iter().map(|&i| vectors[i].as_ref()).collect();
    let centroid = centroid_of(&member_ids, &member_vecs);
    tree.nodes.push(ClusterNode { members: member_ids, children: Vec::new(), centroid });
    if members.len() == 1 {
        return node_index;
    }
    let groups: Vec<Vec<usize>> = if members.len() <= k {
        members.iter().map(|&m| vec![m]).collect()
    } else {
        let km = kmeans(&member_vecs, k, math::mix_seed(seed, node_index as u64));
        let mut groups = vec![Vec::new(); k];
        for (pos, &a) in km.assignments.iter().enumerate() {
            groups[a].push(members[pos]);
        }
        groups.retain(|g| !g.is_empty());
        groups
    };
    let mut children = Vec::with_capacity(groups.len());
    for g in groups {
        children.push(build_cluster(tree, ids, vectors, g, k, seed));
    }
    tree.nodes[node_index].children = children;
    node_index
}

/// Member nearest (L2) to the members' mean descriptor; ties go to the lowest id.
pub fn centroid_of<V: AsRef<[f64]>>(ids: &[ShapeId], vectors: &[V]) -> ShapeId {
    debug_assert!(!ids.is_empty() && ids.len() == vectors.len());
    let dim = vectors[0].as_ref().len();
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= ids.len() as f64;
    }
    let mut best = (ids[0], f64::INFINITY);
    for (&id, v) in ids.iter().zip(vectors) {
        let d = squared_distance(v.as_ref(), &mean);
        if d < best.1 || (d == best.1 && id < best.0) {
            best = (id, d);
        }
    }
    best.0
}
