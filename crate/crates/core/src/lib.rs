//! Robust point-cloud classification with ensembles of partial point clouds.
//!
//! Three specialists share one compact max-pooled architecture; each is
//! trained on a single kind of partial view of the input (local patches,
//! random-walk curves, or sparse random subsets). At inference the views are
//! drawn around farthest-point anchors and the specialists' softmax outputs
//! are averaged. The crate also ships a seeded corruption suite, the
//! evaluation instruments used to analyse the ensemble, a procedural shape
//! dataset and the `epic` command-line pipeline.

pub mod classifier;
pub mod cli;
pub mod corruptions;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod geometry;
mod io;
pub mod metrics;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
pub use io::write_atomic;
