//! Popularity-calibrated re-ranking for top-n recommendation, with the
//! data pipeline, item-based CF base recommender, baseline re-rankers and a
//! multistakeholder metric suite around it.
//!
//! The numeric kernels (divergences, category distributions, re-ranking
//! objectives, metrics) are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`.

pub mod data;
pub mod error;
pub mod experiment;
pub mod knn;
pub mod metrics;
pub mod partition;
pub mod rerank;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Distribution = partition::CategoryDistribution<f64>;
pub type Report = metrics::MetricsReport<f64>;
pub type Deviation = metrics::GroupDeviation<f64>;
pub type Config = rerank::RerankConfig<f64>;
