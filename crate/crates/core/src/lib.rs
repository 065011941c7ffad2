//! Graph-to-sequence transduction with a relation-aware global-attention
//! encoder, a copying transformer decoder and the tooling around them.

mod error;
pub mod cli;
pub mod data;
pub mod eval;
pub mod graph;
pub mod manifest;
pub mod model;
pub mod relpath;
pub mod train;
pub mod vocab;

pub use error::{exit, Error, Result};
