//! File formats, command-line tools and benchmarks around `hoc_core`.

pub mod cli;
pub mod cloud;
pub mod db_dir;
pub mod error;
pub mod obj;
pub mod raster;
pub mod report;
pub mod scene_dir;
pub mod tree_file;
