//! Synthesis of graded telecom root-cause-analysis benchmarks from
//! knowledge-graph fault models, and an evaluate-analyze-repair loop that
//! improves a solver program against them.
//!
//! Module map:
//! - [`kg`]: graph data model and the input/label documents
//! - [`forge`]: topology generation, backward/forward propagation, grading,
//!   dataset assembly
//! - [`eval`]: solver execution, prediction parsing, metrics
//! - [`analyze`]: bad-case categorization and failure reports
//! - [`agent`]: repair prompts, text-generation backends, sanitizing
//! - [`orchestrator`]: the round loop and its manifest
//! - [`solver`]: the reference solver programs
//!
//! Data-parallel loops go through [`exec`]; with the `parallel` feature
//! disabled everything runs sequentially and produces identical output.

pub mod agent;
pub mod analyze;
pub mod eval;
pub mod exec;
pub mod forge;
pub mod kg;
pub mod orchestrator;
pub mod reference;
pub mod solver;

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}
