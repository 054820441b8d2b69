use thiserror::Error;

use crate::synthesis::GershgorinReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("no directed spanning tree{}", match .root {
        Some(r) => format!(" rooted at vertex {}", r + 1),
        None => String::new(),
    })]
    NoSpanningTree { root: Option<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("protocol mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("root feedback requested but no root path is set")]
    MissingRootPath,

    #[error("invalid root path: {0}")]
    InvalidRootPath(String),

    #[error("pair (A, B) is not controllable")]
    Uncontrollable,

    #[error("bad target poles: {0}")]
    BadTargets(String),

    #[error("tree root {} has in-neighbors in the topology; use the root-feedback design", .root + 1)]
    RootHasNeighbors { root: usize },

    #[error("tree root {} has no in-neighbors; root feedback is impossible", .root + 1)]
    RootHasNoNeighbors { root: usize },

    #[error("matrix is not square or not divisible into {block}x{block} blocks")]
    NonSquareBlocks { block: usize },

    #[error("gain synthesis failed{}", match .vertex {
        Some(v) => format!(" at vertex {}", v + 1),
        None => String::from(": assembled closed loop is not Hurwitz"),
    })]
    SynthesisFailed {
        vertex: Option<usize>,
        report: Box<GershgorinReport>,
    },

    #[error("state diverged at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("invalid simulation settings: {0}")]
    InvalidSimulation(String),
}
