//! Causal discovery from observational tabular data.
//!
//! The toolkit follows a two-phase pipeline: recover an undirected dependence
//! skeleton ([`skeleton`]), then orient it with constraint-based ([`pc`]),
//! score-based ([`score`]) or pairwise ([`anm`]) methods. Every method reads
//! and writes [`graph::MixedGraph`]; [`pipeline`] wires the stages together.

pub mod anm;
pub mod data;
pub mod error;
pub mod graph;
pub mod indep;
pub mod pc;
pub mod pipeline;
pub mod score;
pub mod seed;
pub mod skeleton;

pub use data::Dataset;
pub use error::{Error, ErrorKind, Result};
pub use graph::{MixedGraph, SepSets};
