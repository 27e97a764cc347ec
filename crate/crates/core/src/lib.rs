//! Retrieval of a shape model and its 9-DOF pose for a scanned object.
//!
//! Candidates are organized in a tree whose upper levels fix discrete
//! properties (category, yaw) and whose lower levels are a recursive k-means
//! clustering of the model database. A Monte Carlo tree search walks that
//! tree under an expensive render-and-compare loss and returns a good
//! candidate long before every leaf has been scored.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod database;
pub mod error;
pub mod geometry;
pub mod hoctree;
pub mod math;
pub mod mcts;
pub mod metrics;
pub mod objective;
pub mod render;
pub mod shapedesc;
pub mod synth;

pub use database::{ShapeDatabase, ShapeId, ShapeRecord};
pub use error::{Error, Result};
pub use geometry::{KdIndex, OrientedBox, PointCloud, Pose, TriangleMesh};
pub use math::Point3;
