//! Synthesis and exact evaluation of randomized finite-memory strategies for
//! multi-agent patrolling.
//!
//! The pipeline is: an [`Environment`] graph and a [`SolutionSpec`] define the
//! parameter layout; logits are mapped through softmax into a [`Solution`];
//! the solution induces a [`ConfigChain`] over joint configurations; the
//! [`evaluator`] computes fault-tolerant recurrent-visit objectives on the
//! bottom strongly connected components of that chain; [`gradient`] provides
//! exact derivatives; [`optimizer`] runs Adam over several seeds.

pub mod environment;
pub mod error;
pub mod evaluator;
pub mod gradient;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod par;
pub mod scc;
pub mod simulate;
pub mod strategy;
pub mod walks;

pub use environment::Environment;
pub use error::{Error, Result};
pub use evaluator::{EvalOptions, EvaluationReport};
pub use objective::{CompiledObjective, Objective};
pub use optimizer::{OptimizerConfig, RunRecord, Synthesis};
pub use par::Exec;
pub use strategy::{ConfigChain, Mode, ParamSet, Solution, SolutionSpec};
