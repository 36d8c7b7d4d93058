//! Bi-objective application-offloading decision engine.
//!
//! A method-level call graph is duplicated into a local/remote decision graph,
//! where choosing a start→end path chooses a placement for every method. Paths
//! are scored on two objectives (execution time, CPU usage) and the set of
//! non-dominated paths is searched with an ant colony using one pheromone
//! matrix per objective. An online engine learns edge weights from observed
//! executions and caches decisions per execution context. A seedable cost
//! simulator and a loopback HTTP harness provide the two execution backends.

pub mod aco;
pub mod callgraph;
pub mod cli;
pub mod engine;
pub mod pareto;
pub mod rpc;
pub mod sim;

pub use callgraph::{CallGraph, DualPlacementGraph, MethodNode, ObjectiveVector, Placement};
pub use engine::EngineState;
pub use pareto::{ParetoArchive, PathSolution};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("call graph is cyclic after recursion collapse; cycle through methods {0:?}")]
    Cyclic(Vec<u32>),

    #[error("path count exceeds enumeration bound {0}; use the ACO solver instead")]
    PathBound(usize),

    #[error("graph has unmeasured edge weights; run the exploration phase first")]
    Unmeasured,

    #[error("ant reached dead-end node {0}")]
    DeadEnd(usize),

    #[error("invalid parameter: {0}")]
    Params(String),

    #[error("trace does not match the graph at token {0:?}")]
    TraceMismatch(String),

    #[error("empty report")]
    EmptyReport,

    #[error("rpc failure: {0}")]
    Rpc(String),

    #[error("unknown benchmark {0:?}")]
    UnknownBenchmark(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Mixes a base seed with stream identifiers so that parallel experiment
/// sweeps get independent, reproducible RNG streams.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = splitmix64(h);
    }
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
