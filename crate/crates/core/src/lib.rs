//! Static feature extraction and hybrid graph/sequence classification of
//! Android apps.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ir`] parses smali disassembly and the decoded manifest into an [`ir::AppModel`].
//! 2. [`miner`] ranks vulnerability-corpus keywords and derives the critical-API list.
//! 3. [`callgraph`] builds the entry-point-rooted call graph with callback and ICC edges.
//! 4. [`trace`] extracts entry→critical-API call traces and their opcode rows.
//! 5. [`flowgraph`] builds the typed abstract flow graph over code chunks.
//! 6. [`nn`] embeds both views (GNN + BiLSTM), fuses them and classifies.
//! 7. [`metrics`] evaluates predictions and drives hyperparameter search.
//! 8. [`pipeline`] wires the stages together for the command-line tool.

pub mod error;
pub mod ir;
pub mod callgraph;
pub mod flowgraph;
pub mod metrics;
pub mod miner;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
