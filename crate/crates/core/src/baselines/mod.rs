//! Exhaustive baselines (ED, DTW_D, SAX), accuracy metrics and the
//! benchmark and steering experiment drivers.

mod experiment;
mod metrics;
mod sax;

pub use experiment::{
    aggregate, run_bench, steerability_experiment, steerability_experiment_with_step, BenchCase, BenchRow, Method,
    QueryRun, SteerReport, STEER_STEP,
};
pub use metrics::{evaluate, top_tenth_len, EvalReport, HitCount, ORACLE_SIZE};
pub use sax::{breakpoints, mindist_table, paa, sax_transform, symbol, SaxConfig, SaxIndex};

use crate::distance::{dtw_dependent_with, euclidean_matrix, DtwBuffer, DtwParams};
use crate::error::Result;
use crate::window::{Query, WindowSet};

/// Ascending distance, ties by window index.
pub(crate) fn sort_ranking(ranked: &mut [(usize, f64)]) {
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// Every window ranked by Euclidean distance over all tracks.
pub fn rank_ed(windows: &WindowSet, query: &Query) -> Result<Vec<(usize, f64)>> {
    let mut ranked = windows
        .windows()
        .iter()
        .enumerate()
        .map(|(i, w)| euclidean_matrix(query.values.view(), w.values.view()).map(|d| (i, d)))
        .collect::<Result<Vec<_>>>()?;
    sort_ranking(&mut ranked);
    Ok(ranked)
}

/// Every window ranked by dependent multivariate DTW.
pub fn rank_dtwd(windows: &WindowSet, query: &Query, params: &DtwParams) -> Result<Vec<(usize, f64)>> {
    let mut buf = DtwBuffer::default();
    let mut ranked = windows
        .windows()
        .iter()
        .enumerate()
        .map(|(i, w)| dtw_dependent_with(query.values.view(), w.values.view(), params, &mut buf).map(|d| (i, d)))
        .collect::<Result<Vec<_>>>()?;
    sort_ranking(&mut ranked);
    Ok(ranked)
}

/// The exact top-50 under DTW_D.
pub fn oracle_top(windows: &WindowSet, query: &Query, params: &DtwParams) -> Result<Vec<usize>> {
    Ok(rank_dtwd(windows, query, params)?.into_iter().take(ORACLE_SIZE).map(|(w, _)| w).collect())
}
