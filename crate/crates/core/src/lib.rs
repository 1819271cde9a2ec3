//! Statistical undersampling for imbalanced binary classification data.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod matrix;
pub mod mutual_information;
pub mod pipeline;
pub mod rng;
pub mod stratification;
pub mod support_points;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
