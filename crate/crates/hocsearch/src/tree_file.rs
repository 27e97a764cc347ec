//! Versioned JSON for search trees, statistics included. Scores of unvisited
//! nodes are written as `null`.

use std::path::Path;

use hoc_core::hoctree::{Branch, Group, HocNode, HocTree, NodeKind, NodeStats};
use serde::{Deserialize, Serialize};

use crate::error::{self, FormatError, Result};

pub const TREE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub version: u64,
    /// Database directory the tree was built from, as given on the command line.
    pub db: String,
    /// Content hash over the database meshes.
    pub db_hash: String,
    pub pose_angles: Vec<f64>,
    pub categories: Vec<Option<String>>,
    pub k: usize,
    pub seed: u64,
    pub groups: Vec<Group>,
    pub branches: Vec<Branch>,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    #[serde(flatten)]
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub branch: Option<usize>,
    pub visits: u64,
    pub score: Option<f64>,
    pub locked: bool,
}

impl TreeFile {
    pub fn from_tree(tree: &HocTree, db: &str, db_hash: u64) -> TreeFile {
        TreeFile {
            version: TREE_VERSION,
            db: db.to_string(),
            db_hash: format!("{db_hash:016x}"),
            pose_angles: tree.pose_angles.clone(),
            categories: tree.groups.iter().map(|g| g.label.clone()).collect(),
            k: tree.k,
            seed: tree.seed,
            groups: tree.groups.clone(),
            branches: tree.branches.clone(),
            nodes: tree
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    kind: n.kind.clone(),
                    parent: n.parent,
                    children: n.children.clone(),
                    branch: n.branch,
                    visits: n.stats.visits,
                    score: n.stats.score.is_finite().then_some(n.stats.score),
                    locked: n.stats.locked,
                })
                .collect(),
        }
    }

    pub fn to_tree(&self) -> hoc_core::Result<HocTree> {
        let tree = HocTree {
            pose_angles: self.pose_angles.clone(),
            k: self.k,
            seed: self.seed,
            groups: self.groups.clone(),
            branches: self.branches.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|r| HocNode {
                    kind: r.kind.clone(),
                    parent: r.parent,
                    children: r.children.clone(),
                    branch: r.branch,
                    stats: NodeStats { visits: r.visits, score: r.score.unwrap_or(f64::NEG_INFINITY), locked: r.locked },
                })
                .collect(),
        };
        tree.validate()?;
        Ok(tree)
    }
}

pub fn to_string(file: &TreeFile) -> String {
    let mut s = serde_json::to_string(file).expect("tree serializes");
    s.push('\n');
    s
}

pub fn parse(path: &Path, text: &str) -> Result<(TreeFile, HocTree)> {
    #[derive(Deserialize)]
    struct Header {
        version: Option<u64>,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| FormatError::json(path, text, &e))?;
    match header.version {
        Some(TREE_VERSION) => {}
        Some(found) => return Err(FormatError::UnsupportedVersion { path: path.to_path_buf(), found, expected: TREE_VERSION }),
        None => return Err(FormatError::parse(path, 0, "missing \"version\" field")),
    }
    let file: TreeFile = serde_json::from_str(text).map_err(|e| FormatError::json(path, text, &e))?;
    let tree = file.to_tree().map_err(|e| FormatError::invalid(path, e))?;
    Ok((file, tree))
}

pub fn read(path: &Path) -> Result<(TreeFile, HocTree)> {
    parse(path, &error::read_text(path)?)
}

pub fn write(path: &Path, file: &TreeFile) -> Result<()> {
    error::write(path, to_string(file).as_bytes())
}
