//! Weighted query-aware LSH: Gaussian projections merge the tracks of each
//! window into univariate codes, collisions prune the windows, and distances
//! between codes rank the survivors.

mod candidates;
mod config;
mod model;
mod scoring;

pub use candidates::{
    generate_candidates, generate_candidates_indexed, hash_collision, min_max_normalize, projection_collision,
    CandidateEntry, CandidateSet,
};
pub use config::{LshConfig, RankMetric};
pub use model::{
    hash_code, AtomicHashFunction, Codes, CompoundHashFunction, HashIndex, LshModel, MODEL_FORMAT_VERSION,
};
pub use scoring::{score_candidates, score_candidates_indexed, ScoreStats};
