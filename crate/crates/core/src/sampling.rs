//! Picks the windows shown for labelling: the best windows of each hash table
//! plus uniform random draws, and summarizes each table for the table view.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Zip};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsh::CandidateSet;
use crate::window::WindowSet;

pub const HISTOGRAM_BINS: usize = 10;
/// Windows per table that form its prototype.
pub const TABLE_PROTOTYPE_SIZE: usize = 20;
pub const MAX_K_TOP: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Best windows taken per table, `1..=5`.
    pub k_top: usize,
    /// Uniform random draws on top of the per-table picks.
    pub n_explore: usize,
    /// Already labelled windows; never sampled again.
    pub exclude: BTreeSet<usize>,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(k_top: usize, n_explore: usize, exclude: BTreeSet<usize>, seed: u64) -> Result<Self> {
        if !(1..=MAX_K_TOP).contains(&k_top) {
            return Err(Error::InvalidConfig(format!("k_top must be in 1..=5, got {k_top}")));
        }
        Ok(Self { k_top, n_explore, exclude, seed })
    }

    /// Equal exploit and explore budgets: `n_explore = tables · k_top`.
    pub fn balanced(k_top: usize, tables: usize, exclude: BTreeSet<usize>, seed: u64) -> Result<Self> {
        Self::new(k_top, tables * k_top, exclude, seed)
    }
}

/// Start offsets of window indices, used for overlap tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGrid {
    pub window_len: usize,
    pub stride: usize,
}

impl WindowGrid {
    pub fn of(windows: &WindowSet) -> Self {
        Self { window_len: windows.window_len(), stride: windows.stride() }
    }

    /// Shared time steps of two windows.
    pub fn overlap(&self, a: usize, b: usize) -> usize {
        let gap = a.abs_diff(b) * self.stride;
        self.window_len.saturating_sub(gap)
    }

    /// More than half of the window length is shared.
    pub fn overlaps_heavily(&self, a: usize, b: usize) -> bool {
        2 * self.overlap(a, b) > self.window_len
    }
}

/// Top `k_top` non-excluded windows of every table in table order, deduplicated,
/// dropping any window that shares more than half its length with an earlier pick.
///
/// `rankings[table]` lists `(window, score)` best first.
pub fn exploit_samples(rankings: &[Vec<(usize, f64)>], grid: WindowGrid, plan: &SamplePlan) -> Vec<usize> {
    let mut picks: Vec<usize> = Vec::new();
    for ranking in rankings {
        let top = ranking.iter().map(|(w, _)| *w).filter(|w| !plan.exclude.contains(w)).take(plan.k_top);
        for w in top {
            if !picks.iter().any(|&p| p == w || grid.overlaps_heavily(p, w)) {
                picks.push(w);
            }
        }
    }
    picks
}

/// `n_explore` windows drawn uniformly without replacement from all windows
/// outside `exclude` and `taken`.
pub fn explore_samples(num_windows: usize, taken: &[usize], plan: &SamplePlan) -> Vec<usize> {
    let taken: BTreeSet<usize> = taken.iter().copied().collect();
    let pool: Vec<usize> = (0..num_windows).filter(|w| !plan.exclude.contains(w) && !taken.contains(w)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    pool.choose_multiple(&mut rng, plan.n_explore.min(pool.len())).copied().collect()
}

/// Bin counts of scores in `[0, 1]` over equi-width bins; 1.0 falls in the last bin.
pub fn histogram(scores: impl IntoIterator<Item = f64>) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for s in scores {
        counts[bin_of(s)] += 1;
    }
    counts
}

pub fn bin_of(score: f64) -> usize {
    ((score * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Per time step and track mean, minimum and maximum over a set of windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub count: usize,
    pub mean: Array2<f64>,
    pub min: Array2<f64>,
    pub max: Array2<f64>,
}

impl Prototype {
    /// `None` for an empty set.
    pub fn from_windows<'a>(members: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Option<Self> {
        let mut it = members.into_iter();
        let first = it.next()?;
        let mut sum = first.to_owned();
        let mut min = first.to_owned();
        let mut max = first.to_owned();
        let mut count = 1;
        for w in it {
            Zip::from(&mut sum).and(&mut min).and(&mut max).and(w).for_each(|s, lo, hi, &v| {
                *s += v;
                *lo = lo.min(v);
                *hi = hi.max(v);
            });
            count += 1;
        }
        // The mean of identical values must not drift outside [min, max].
        let mut mean = sum / count as f64;
        Zip::from(&mut mean).and(&min).and(&max).for_each(|m, &lo, &hi| *m = m.clamp(lo, hi));
        Some(Self { count, mean, min, max })
    }
}

/// Score histogram and top-20 prototype of one hash table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub table: usize,
    /// Empty when no window collided under this table.
    pub histogram: Vec<usize>,
    pub prototype: Option<Prototype>,
    /// Best windows of the table, at most 20.
    pub top: Vec<usize>,
    pub empty: bool,
}

pub fn table_summary(table: usize, ranking: &[(usize, f64)], windows: &WindowSet) -> Result<TableSummary> {
    if ranking.is_empty() {
        return Ok(TableSummary { table, histogram: Vec::new(), prototype: None, top: Vec::new(), empty: true });
    }
    let top: Vec<usize> = ranking.iter().take(TABLE_PROTOTYPE_SIZE).map(|(w, _)| *w).collect();
    let members = top.iter().map(|&w| windows.get(w).map(|w| w.values.view())).collect::<Result<Vec<_>>>()?;
    Ok(TableSummary {
        table,
        histogram: histogram(ranking.iter().map(|(_, s)| *s)),
        prototype: Prototype::from_windows(members),
        top,
        empty: false,
    })
}

/// Summaries of every table of a scored candidate set.
pub fn table_summaries(candidates: &CandidateSet, windows: &WindowSet) -> Result<Vec<TableSummary>> {
    (0..candidates.num_tables).map(|t| table_summary(t, &candidates.table_ranking(t), windows)).collect()
}
