//! Discriminative 2D projection of classifier embeddings, decision-surface
//! reconstruction and projection quality evaluation.
//!
//! The pipeline runs in four stages:
//!
//! 1. build a pairwise distance matrix with the Jensen-Shannon arc metric
//!    ([`metric`]) and embed it in 2D with UMAP ([`projector`]);
//! 2. fit a radial basis function network from 2D back to the data space
//!    ([`inverse`]) and push a regular grid through it;
//! 3. classify the lifted grid to recover labels and certainty;
//! 4. assemble a [`pipeline::VisPayload`] with per-point mismatch flags and
//!    the quality scores from [`eval`].

pub mod classifier;
pub mod data;
mod dd;
pub mod error;
pub mod eval;
pub mod inverse;
pub mod metric;
pub mod pipeline;
pub mod projector;
pub mod render;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
