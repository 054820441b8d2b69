//! Consensus analysis and gain design for linear multi-agent systems over a
//! directed spanning tree (DST) of the communication graph.
//!
//! Agent ids are 0-based throughout the library. Scenario files and reports
//! use 1-based ids.
//!
//! ```
//! use consensus_forge::criterion::{criterion, CriterionOptions};
//! use consensus_forge::{extract_dst, Scenario};
//!
//! let s = Scenario::builtin("example1").unwrap();
//! let (dynamics, topo) = (s.dynamics().unwrap(), s.topology().unwrap());
//! let tree = extract_dst(&topo, s.root()).unwrap();
//! let verdict = criterion(&dynamics, &topo, &tree, CriterionOptions::default()).unwrap();
//! assert!(verdict.consensus_achievable);
//! ```

pub mod criterion;
pub mod error;
pub mod export;
pub mod graph;
pub mod linalg;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod synthesis;
pub mod transform;

pub use error::{Error, Result};
pub use graph::{extract_dst, renumber, ProtocolMode, SpanningTree, Topology};
pub use report::{run, Command, Outcome, Report, RunOptions};
pub use scenario::Scenario;
pub use transform::{AgentDynamics, GainSet, TransformedSystem};
