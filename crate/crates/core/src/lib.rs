//! Transfer learning on stacked features from several pretrained networks.
//!
//! Features from each network arrive as a [`feature_store::FeatureMatrix`].
//! [`stacking`] concatenates them, [`classifier`] trains the linear head,
//! [`sweep`] grid-searches its hyperparameters, [`ensemble`] averages the
//! winners of every network subset, and [`joint`] trains a shared trunk
//! across several tasks and measures how well it transfers.

pub mod classifier;
pub mod ensemble;
pub mod error;
pub mod feature_store;
pub mod joint;
pub mod matrix;
pub mod report;
pub mod stacking;
pub mod sweep;
pub mod util;

pub use error::{Error, Result};
pub use matrix::Matrix;
