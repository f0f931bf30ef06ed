//! Causal bandits that share reward information between arms through
//! separating sets.
//!
//! The crate covers graphs with context (intervention) nodes and
//! d-separation, discrete structural causal models, an append-only interaction
//! log with count queries, the information-sharing estimator and its
//! confidence bounds, G²-based separating-set discovery, UCB / Thompson
//! sampling policies and their information-sharing variants, and a parallel
//! experiment harness.

#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod discovery;
pub mod graph;
pub mod harness;
pub mod inference;
pub mod policies;
pub mod scm;
pub mod special;

pub use data::{DataError, Dataset, Predicate, Schema};
pub use discovery::{DiscoveryMetrics, SepSetCatalog};
pub use graph::{Dag, GraphError, NodeId};
pub use harness::{run_experiment, EnvSpec, ExperimentConfig, HarnessError};
pub use policies::{Policy, PolicyConfig, PolicyKind, DiscoveryMode};
pub use scm::{Arm, DiscreteScm, Environment, ScmError, Value};
