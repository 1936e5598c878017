//! Weighted tensor decomposition models for context-aware top-k
//! recommendation from implicit feedback.
//!
//! The library factorizes a binary user-item-context interaction tensor with
//! a weighted square loss: observed cells get confidence `1 + alpha`,
//! everything else weighs one. Three decomposition structures are provided,
//! each trained with alternating least squares:
//!
//! - **CP**: every cell is an elementwise product of factor vectors
//!   (user, item and one vector per context value).
//! - **PITF**: the sum of pairwise dot products between the three factors.
//! - **TTF**: user and item factors are vectors, each context value is a
//!   full `k x k` matrix between them.
//!
//! Context factors can be regularized towards zero or towards the
//! decomposition's multiplicative identity (`one` variants), and multiple
//! context features can either be stacked into a single tensor dimension or
//! kept as separate dimensions (CP only).
//!
//! The crate also ships the context-unaware baselines (weighted matrix
//! factorization and item-item cosine similarity), CSV preprocessing
//! pipelines, synthetic fixture generators, and a leave-one-out evaluation
//! harness with HR@k / MRR@k metrics, repeated splits and grid search.

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod models;
pub mod reference;
pub mod tensor;

pub use error::{Error, Result};
