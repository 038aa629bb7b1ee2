//! Steerable pattern retrieval for multivariate time series.
//!
//! Sliding windows are hashed into univariate codes by weighted Gaussian
//! projections, candidates are pruned by query-aware hash collisions and
//! ranked by DTW or Euclidean distance on the codes. Relevance feedback
//! on hash tables and on samples re-weights the tracks and refines the query.

pub mod baselines;
pub mod distance;
pub mod error;
pub mod feedback;
pub mod lsh;
pub mod pipeline;
pub mod sampling;
pub mod series;
pub mod synthetic;
pub mod window;

pub use distance::DtwParams;
pub use error::{Error, Result};
pub use feedback::{LabelSet, SampleLabel, TableLabel, WeightState};
pub use lsh::{CandidateSet, LshConfig, LshModel, RankMetric};
pub use pipeline::{RetrievalResult, Session, SessionDocument};
pub use series::MultivariateTimeSeries;
pub use window::{Query, Window, WindowSet};
