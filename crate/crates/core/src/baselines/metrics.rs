use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the ground-truth set and of the "top-50" cut.
pub const ORACLE_SIZE: usize = 50;

/// A fraction kept as its exact counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCount {
    pub hits: usize,
    pub total: usize,
}

impl HitCount {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// `⌈N / 10⌉`.
pub fn top_tenth_len(num_windows: usize) -> usize {
    num_windows.div_ceil(10)
}

/// Accuracy of one method on one query against the exact top-50.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Oracle windows inside the set the method classifies as similar.
    pub recall: HitCount,
    /// Oracle windows inside the method's top-50.
    pub precision_50: HitCount,
    /// Oracle windows inside the method's top 10% of all windows.
    pub precision_10pct: HitCount,
    pub preprocessing_s: f64,
    pub querying_s: f64,
}

/// Scores a ranking (best first) and a classified-similar set against `oracle`.
pub fn evaluate(
    method: &str,
    ranking: &[usize],
    classified_similar: &[usize],
    oracle: &[usize],
    num_windows: usize,
) -> Result<EvalReport> {
    let truth: BTreeSet<usize> = oracle.iter().copied().collect();
    if truth.len() != oracle.len() || truth.len() != ORACLE_SIZE.min(num_windows) {
        return Err(Error::InvalidConfig(format!(
            "oracle must hold {} distinct windows",
            ORACLE_SIZE.min(num_windows)
        )));
    }
    let hits = |set: &mut dyn Iterator<Item = &usize>| {
        let set: BTreeSet<usize> = set.copied().collect();
        HitCount { hits: truth.intersection(&set).count(), total: truth.len() }
    };
    Ok(EvalReport {
        method: method.to_string(),
        recall: hits(&mut classified_similar.iter()),
        precision_50: hits(&mut ranking.iter().take(ORACLE_SIZE)),
        precision_10pct: hits(&mut ranking.iter().take(top_tenth_len(num_windows))),
        preprocessing_s: 0.0,
        querying_s: 0.0,
    })
}
