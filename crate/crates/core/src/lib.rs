//! Modulation recognition by subgraph embedding learning.

pub mod autodiff;
pub mod embed;
pub mod error;
pub mod eval;
pub mod knn;
pub mod nn;
pub mod preprocess;
pub mod sel;
pub mod siggen;
pub mod train;

pub use error::{Error, Result};
