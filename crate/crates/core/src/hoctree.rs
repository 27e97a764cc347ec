//! The search tree: property levels (category, yaw) above per-category
//! cluster hierarchies, plus the per-node statistics the search mutates.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::database::{ShapeDatabase, ShapeId};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose};
use crate::math;
use crate::shapedesc::{hierarchical_cluster, ClusterTree};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum NodeKind {
    Root,
    /// Index into [`HocTree::groups`].
    Category {
        group: usize,
    },
    Pose {
        angle_deg: f64,
    },
    /// Node `cluster` of the branch's cluster tree.
    Cluster {
        cluster: usize,
    },
    Leaf {
        shape: ShapeId,
        cluster: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats {
    pub visits: u64,
    /// Best score seen below this node; `-inf` until visited.
    pub score: f64,
    pub locked: bool,
}

impl Default for NodeStats {
    fn default() -> Self {
        NodeStats { visits: 0, score: f64::NEG_INFINITY, locked: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HocNode {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Pose branch this node belongs to (`None` above the pose level).
    pub branch: Option<usize>,
    pub stats: NodeStats,
}

impl HocNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn shape(&self) -> Option<ShapeId> {
        match self.kind {
            NodeKind::Leaf { shape, .. } => Some(shape),
            _ => None,
        }
    }
}

/// Shapes sharing one cluster hierarchy: a category, or the whole database
/// when the category level is off.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Group {
    pub label: Option<String>,
    pub clusters: ClusterTree,
}

/// One (group, yaw) subtree.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Branch {
    pub group: usize,
    pub angle_deg: f64,
    /// The pose node.
    pub node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HocTree {
    pub pose_angles: Vec<f64>,
    pub k: usize,
    pub seed: u64,
    pub groups: Vec<Group>,
    pub branches: Vec<Branch>,
    /// Arena; node 0 is the root.
    pub nodes: Vec<HocNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeOptions {
    pub pose_angles: Vec<f64>,
    pub category_level: bool,
    pub k: usize,
    pub seed: u64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { pose_angles: vec![0.0, 90.0, 180.0, 270.0], category_level: false, k: 5, seed: 0 }
    }
}

impl HocTree {
    pub fn build(db: &ShapeDatabase, opts: &TreeOptions) -> Result<HocTree> {
        if db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if opts.pose_angles.is_empty() {
            return Err(Error::InvalidArgument("at least one pose angle is required".into()));
        }
        if opts.pose_angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("pose angles"));
        }
        let mut groups = Vec::new();
        let labelled: Vec<(Option<String>, Vec<ShapeId>)> = if opts.category_level {
            db.categories().into_iter().map(|c| (Some(c.clone()), db.ids_in_category(&c))).collect()
        } else {
            vec![(None, db.ids())]
        };
        for (gi, (label, ids)) in labelled.into_iter().enumerate() {
            let vectors: Vec<&[f64]> =
                ids.iter().map(|&id| db.get(id).map(|r| r.descriptor().as_slice())).collect::<Result<_>>()?;
            let clusters = hierarchical_cluster(&ids, &vectors, opts.k, math::mix_seed(opts.seed, gi as u64))?;
            groups.push(Group { label, clusters });
        }
        let mut tree = HocTree {
            pose_angles: opts.pose_angles.clone(),
            k: opts.k,
            seed: opts.seed,
            groups,
            branches: Vec::new(),
            nodes: Vec::new(),
        };
        tree.instantiate(opts.category_level);
        Ok(tree)
    }

    fn push(&mut self, kind: NodeKind, parent: Option<usize>, branch: Option<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(HocNode { kind, parent, children: Vec::new(), branch, stats: NodeStats::default() });
        if let Some(p) = parent {
            self.nodes[p].children.push(id);
        }
        id
    }

    fn instantiate(&mut self, category_level: bool) {
        let root = self.push(NodeKind::Root, None, None);
        for group in 0..self.groups.len() {
            let parent = if category_level { self.push(NodeKind::Category { group }, Some(root), None) } else { root };
            for ai in 0..self.pose_angles.len() {
                let angle_deg = self.pose_angles[ai];
                let branch = self.branches.len();
                let node = self.push(NodeKind::Pose { angle_deg }, Some(parent), Some(branch));
                self.branches.push(Branch { group, angle_deg, node });
                let top = &self.groups[group].clusters.nodes[0];
                if top.is_leaf() {
                    let shape = top.members[0];
                    self.push(NodeKind::Leaf { shape, cluster: 0 }, Some(node), Some(branch));
                } else {
                    for c in top.children.clone() {
                        self.instantiate_cluster(group, c, node, branch);
                    }
                }
            }
        }
    }

    fn instantiate_cluster(&mut self, group: usize, cluster: usize, parent: usize, branch: usize) {
        let c = &self.groups[group].clusters.nodes[cluster];
        if c.is_leaf() {
            let shape = c.members[0];
            self.push(NodeKind::Leaf { shape, cluster }, Some(parent), Some(branch));
            return;
        }
        let children = c.children.clone();
        let id = self.push(NodeKind::Cluster { cluster }, Some(parent), Some(branch));
        for ch in children {
            self.instantiate_cluster(group, ch, id, branch);
        }
    }

    pub fn root(&self) -> &HocNode {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Shape ids of the leaves below a node, in depth-first order.
    pub fn leaves_below(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            if self.nodes[i].is_leaf() {
                out.push(i);
            }
            stack.extend(self.nodes[i].children.iter().rev());
        }
        out
    }

    pub fn branch_shapes(&self, branch: usize) -> Vec<ShapeId> {
        self.leaves_below(self.branches[branch].node).into_iter().filter_map(|i| self.nodes[i].shape()).collect()
    }

    /// Representative model of a node: the cluster centroid, or the leaf's shape.
    pub fn centroid(&self, node: usize) -> Option<ShapeId> {
        let n = &self.nodes[node];
        let group = &self.groups[self.branches[n.branch?].group].clusters;
        match n.kind {
            NodeKind::Leaf { shape, .. } => Some(shape),
            NodeKind::Cluster { cluster } => Some(group.nodes[cluster].centroid),
            NodeKind::Pose { .. } => Some(group.nodes[0].centroid),
            _ => None,
        }
    }

    /// Longest pose-node-to-leaf path, in edges.
    pub fn cluster_depth(&self) -> usize {
        fn walk(t: &HocTree, i: usize) -> usize {
            t.nodes[i].children.iter().map(|&c| 1 + walk(t, c)).max().unwrap_or(0)
        }
        self.branches.iter().map(|b| walk(self, b.node)).max().unwrap_or(0)
    }

    /// Shape and box-derived pose a leaf stands for.
    pub fn candidate_of(&self, leaf: usize, bbox: &OrientedBox) -> Result<(ShapeId, Pose)> {
        let node = self.nodes.get(leaf).ok_or_else(|| Error::InvalidArgument(alloc::format!("no node {leaf}")))?;
        let shape = node.shape().ok_or_else(|| Error::InvalidArgument(alloc::format!("node {leaf} is not a leaf")))?;
        let branch = node.branch.ok_or_else(|| Error::InvalidArgument("leaf without branch".into()))?;
        Ok((shape, bbox.rotated_pose(self.branches[branch].angle_deg)))
    }

    pub fn reset_stats(&mut self) {
        for n in &mut self.nodes {
            n.stats = NodeStats::default();
        }
    }

    /// Checks parent/child links, branch bookkeeping and the stats
    /// invariants. Used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(alloc::format!("malformed tree: {msg}")));
        if self.nodes.is_empty() || self.nodes[0].kind != NodeKind::Root || self.nodes[0].parent.is_some() {
            return bad("node 0 must be the root");
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                if c >= self.nodes.len() || self.nodes[c].parent != Some(i) || c <= i {
                    return bad("inconsistent parent links");
                }
                if self.nodes[c].stats.visits > n.stats.visits {
                    return bad("child visited more often than its parent");
                }
            }
            if n.is_leaf() != n.children.is_empty() {
                return bad("leaves must be exactly the childless nodes");
            }
            if n.stats.locked && !n.is_leaf() && n.children.iter().any(|&c| !self.nodes[c].stats.locked) {
                return bad("locked node with unlocked child");
            }
            if let Some(b) = n.branch {
                let Some(br) = self.branches.get(b) else {
                    return bad("branch index out of range");
                };
                if br.group >= self.groups.len() {
                    return bad("group index out of range");
                }
                let clusters = &self.groups[br.group].clusters;
                match n.kind {
                    NodeKind::Cluster { cluster } if cluster >= clusters.nodes.len() => return bad("cluster index"),
                    NodeKind::Leaf { cluster, shape }
                        if cluster >= clusters.nodes.len() || clusters.nodes[cluster].members != [shape] =>
                    {
                        return bad("leaf does not match its cluster")
                    }
                    _ => {}
                }
            }
        }
        for (b, br) in self.branches.iter().enumerate() {
            if br.node >= self.nodes.len() || self.nodes[br.node].branch != Some(b) {
                return bad("branch does not point at its pose node");
            }
            let mut got = self.branch_shapes(b);
            got.sort();
            let mut want = self.groups[br.group].clusters.root().members.clone();
            want.sort();
            if got != want {
                return bad("branch leaves differ from its group");
            }
        }
        Ok(())
    }
}
