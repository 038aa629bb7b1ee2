use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::window::{Query, WindowSet};

/// Symbolic aggregate approximation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaxConfig {
    /// PAA segments per track, `1..=t`.
    pub segments: usize,
    /// Alphabet size, `2..=26`.
    pub alphabet: usize,
}

impl SaxConfig {
    /// One segment per time step and ten symbols.
    pub fn for_window_len(t: usize) -> Self {
        Self { segments: t, alphabet: 10 }
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if !(1..=t).contains(&self.segments) {
            return Err(Error::InvalidConfig(format!("SAX segments must be in 1..={t}")));
        }
        if !(2..=26).contains(&self.alphabet) {
            return Err(Error::InvalidConfig("SAX alphabet must be in 2..=26".into()));
        }
        Ok(())
    }
}

/// Standard-normal quantiles at `i / alphabet`, `i = 1..alphabet`.
pub fn breakpoints(alphabet: usize) -> Vec<f64> {
    let normal = Normal::standard();
    (1..alphabet).map(|i| normal.inverse_cdf(i as f64 / alphabet as f64)).collect()
}

/// Segment means; segment `s` covers `[s·t/segments, (s+1)·t/segments)`.
pub fn paa(track: &[f64], segments: usize) -> Vec<f64> {
    let t = track.len();
    (0..segments)
        .map(|s| {
            let (lo, hi) = (s * t / segments, (s + 1) * t / segments);
            track[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Index of the breakpoint interval containing `value`; 0 is the lowest symbol.
pub fn symbol(value: f64, breakpoints: &[f64]) -> u8 {
    breakpoints.partition_point(|&b| b <= value) as u8
}

/// One SAX word per track, `[track][segment]`.
pub fn sax_transform(window: ArrayView2<'_, f64>, cfg: &SaxConfig) -> Vec<Vec<u8>> {
    let bps = breakpoints(cfg.alphabet);
    window
        .columns()
        .into_iter()
        .map(|col| paa(&col.to_vec(), cfg.segments).into_iter().map(|m| symbol(m, &bps)).collect())
        .collect()
}

/// Symbol distance table: zero for equal or adjacent symbols, otherwise the
/// gap between the breakpoints that separate them.
pub fn mindist_table(breakpoints: &[f64]) -> Vec<Vec<f64>> {
    let a = breakpoints.len() + 1;
    (0..a)
        .map(|r| {
            (0..a)
                .map(|c| {
                    if r.abs_diff(c) <= 1 {
                        0.0
                    } else {
                        let (lo, hi) = (r.min(c), r.max(c));
                        breakpoints[hi - 1] - breakpoints[lo]
                    }
                })
                .collect()
        })
        .collect()
}

/// Symbols of every window, flattened `[window][track][segment]`.
#[derive(Debug, Clone)]
pub struct SaxIndex {
    cfg: SaxConfig,
    window_len: usize,
    dims: usize,
    words: Vec<u8>,
    table: Vec<Vec<f64>>,
}

impl SaxIndex {
    /// Refuses to allocate more than `budget_bytes` of symbols.
    pub fn build(windows: &WindowSet, cfg: SaxConfig, budget_bytes: usize) -> Result<Self> {
        cfg.validate(windows.window_len())?;
        let needed = windows.len() * windows.dims() * cfg.segments;
        if needed > budget_bytes {
            return Err(Error::ResourceExhausted { needed, budget: budget_bytes });
        }
        let mut words = Vec::with_capacity(needed);
        for w in windows.windows() {
            for word in sax_transform(w.values.view(), &cfg) {
                words.extend(word);
            }
        }
        Ok(Self {
            cfg,
            window_len: windows.window_len(),
            dims: windows.dims(),
            words,
            table: mindist_table(&breakpoints(cfg.alphabet)),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len() / (self.dims * self.cfg.segments).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Per-track MINDIST summed over tracks.
    pub fn distance(&self, query: &[Vec<u8>], window: usize) -> f64 {
        let seg = self.cfg.segments;
        let scale = (self.window_len as f64 / seg as f64).sqrt();
        let base = window * self.dims * seg;
        query
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let w = &self.words[base + j * seg..base + (j + 1) * seg];
                let ss: f64 = q.iter().zip(w).map(|(&a, &b)| self.table[a as usize][b as usize].powi(2)).sum();
                scale * ss.sqrt()
            })
            .sum()
    }

    /// Every window ranked by SAX distance to the query, ties by index.
    pub fn rank(&self, query: &Query) -> Result<Vec<(usize, f64)>> {
        if query.values.dim() != (self.window_len, self.dims) {
            return Err(Error::Shape("query shape differs from the indexed windows".into()));
        }
        let word = sax_transform(query.values.view(), &self.cfg);
        let mut ranked: Vec<(usize, f64)> = (0..self.len()).map(|w| (w, self.distance(&word, w))).collect();
        super::sort_ranking(&mut ranked);
        Ok(ranked)
    }
}
