//! Interpretable linear sequence classification over the all-k-mer feature
//! space, with embedding-derived symbol groups as an extended alphabet and a
//! semantic fidelity score for the learned features.
//!
//! The learner is a greedy coordinate descent with Gauss-Southwell selection;
//! the best feature per iteration is found exactly by a branch-and-bound
//! search over the nested k-mer space.

pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod fidelity;
pub mod groups;
pub mod learner;
pub mod model;

pub use error::{Error, Result};
