//! Building retrieval and generation benchmarks from case-law corpora.
//!
//! The pipeline ingests case records ([`corpus`]), recognizes citations
//! ([`citation`]), turns citation contexts into masked retrieval queries
//! ([`query`]) and analytical paragraphs into generation instances
//! ([`genset`]), retrieves with lexical methods ([`retrieval`]) and scores
//! runs and generated text ([`metrics`]).

pub mod citation;
pub mod corpus;
pub mod error;
pub mod genset;
pub mod metrics;
pub mod query;
pub mod retrieval;

pub use error::{Error, Result};
