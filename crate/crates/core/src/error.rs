use alloc::string::String;
use core::fmt;

/// Errors produced by the retrieval core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyMesh,
    DegenerateMesh,
    EmptyCloud,
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertices: usize,
    },
    NonFinite(&'static str),
    InvalidPose(&'static str),
    InvalidCamera(&'static str),
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    NoFrames,
    NoTargetSilhouette,
    EmptyDatabase,
    UnknownShape(u32),
    InvalidArgument(String),
    EmptyQuerySet,
    MissingGroundTruth(String),
    /// An objective evaluation failed inside a search.
    Evaluation {
        iteration: usize,
        leaf: usize,
        source: alloc::boxed::Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyMesh => write!(f, "empty mesh"),
            Error::DegenerateMesh => write!(f, "mesh has zero total surface area"),
            Error::EmptyCloud => write!(f, "empty point cloud"),
            Error::IndexOutOfRange { triangle, index, vertices } => {
                write!(f, "triangle {triangle} references vertex {index} but mesh has {vertices} vertices")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidPose(why) => write!(f, "invalid pose: {why}"),
            Error::InvalidCamera(why) => write!(f, "invalid camera: {why}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "raster dimension mismatch: expected {}x{}, found {}x{}", expected.0, expected.1, found.0, found.1)
            }
            Error::NoFrames => write!(f, "scene has no frames"),
            Error::NoTargetSilhouette => write!(f, "no target silhouette"),
            Error::EmptyDatabase => write!(f, "shape database is empty"),
            Error::UnknownShape(id) => write!(f, "shape {id} is not in the database"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptyQuerySet => write!(f, "empty query set"),
            Error::MissingGroundTruth(ids) => write!(f, "missing ground truth for queries: {ids}"),
            Error::Evaluation { iteration, leaf, source } => {
                write!(f, "objective failed at iteration {iteration} on leaf node {leaf}: {source}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;
