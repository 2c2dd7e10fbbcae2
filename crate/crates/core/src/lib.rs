//! Maximum spurious correlation in high dimensions.
//!
//! Computes the largest sample correlation between a noise or residual vector
//! and any linear combination of `s` out of `p` covariates, approximates its
//! null law with a multiplier bootstrap and with extreme-value limits, and uses
//! both to judge variable-selection discoveries and to test exogeneity of
//! sparse linear models.
//!
//! Numerical routines are generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the CLI uses.

pub mod asymptotics;
pub mod bootstrap;
pub mod cli;
pub mod data;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod float;
pub mod inference;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod spurious;
pub mod subset_search;

pub use error::{Error, Result};
pub use float::Real;
pub use rng::RngStream;

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type SubsetSolution64 = subset_search::SubsetSolution<f64>;
pub type SpuriousCorrEstimate64 = spurious::SpuriousCorrEstimate<f64>;
pub type BootstrapDistribution64 = bootstrap::BootstrapDistribution<f64>;
pub type FitResult64 = regression::FitResult<f64>;
pub type LinearModelSpec64 = datagen::LinearModelSpec<f64>;
pub type CovarianceModel64 = datagen::CovarianceModel<f64>;
pub type TestReport64 = inference::TestReport<f64>;
pub type TableResult64 = experiments::TableResult<f64>;
