//! Evaluation harness for patent novelty (prior-art) search systems.

pub mod alignment;
pub mod corpus;
pub mod dataset;
mod lang;
pub mod query;
pub mod sampling;
pub mod execution;
pub mod metrics;
pub mod report;
pub mod synth;
