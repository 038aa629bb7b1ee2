//! Exact distance kernels: Euclidean, banded DTW (univariate and dependent
//! multivariate), per-track DTW, and DTW barycenter averaging.

mod dba;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dba::{dba_average, dtw_dependent_path, DBA_TOLERANCE};

/// Sakoe-Chiba band settings shared by every DTW call in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwParams {
    /// Band half-width as a fraction of the (longer) sequence length.
    pub band_frac: f64,
}

impl Default for DtwParams {
    fn default() -> Self {
        Self { band_frac: 0.05 }
    }
}

impl DtwParams {
    pub fn unconstrained() -> Self {
        Self { band_frac: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_frac > 0.0 && self.band_frac <= 1.0) {
            return Err(Error::InvalidConfig(format!("band_frac must be in (0, 1], got {}", self.band_frac)));
        }
        Ok(())
    }

    /// Band half-width in cells for sequences of length `n` and `m`.
    ///
    /// Widened to `|n - m| + 1` when the nominal band cannot reach the last cell.
    pub fn window(&self, n: usize, m: usize) -> usize {
        let w = (self.band_frac * n.max(m) as f64).ceil() as usize;
        let gap = n.abs_diff(m);
        if w < gap {
            log::warn!("Sakoe-Chiba band {w} narrower than length gap {gap}; widening");
            gap + 1
        } else {
            w
        }
    }
}

/// Number of DP cells evaluated for lengths `n`, `m` under half-width `w`.
pub fn banded_cell_count(n: usize, m: usize, w: usize) -> u64 {
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(m - 1);
            (hi + 1 - lo) as u64
        })
        .sum()
}

/// `√Σ (x - y)²` over all entries of two equally shaped slices.
pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("euclidean on lengths {} and {}", x.len(), y.len())));
    }
    Ok(squared_euclidean(x, y).sqrt())
}

pub(crate) fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Euclidean distance between two matrices of the same shape.
pub fn euclidean_matrix(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.dim(), y.dim())));
    }
    Ok(x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Banded DTW on rolling rows. `cost(i, j)` is the local cost of aligning
/// step `i` of the first sequence with step `j` of the second.
pub(crate) fn dtw_banded<F>(n: usize, m: usize, w: usize, mut cost: F, buf: &mut DtwBuffer) -> f64
where
    F: FnMut(usize, usize) -> f64,
{
    buf.prev.clear();
    buf.prev.resize(m, f64::INFINITY);
    buf.curr.clear();
    buf.curr.resize(m, f64::INFINITY);

    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(m - 1);
        // `curr` still holds row i-2; the cell left of the band is the only stale read.
        if lo > 0 {
            buf.curr[lo - 1] = f64::INFINITY;
        }
        for j in lo..=hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { buf.prev[j] } else { f64::INFINITY };
                let left = if j > 0 { buf.curr[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { buf.prev[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            buf.curr[j] = cost(i, j) + best;
        }
        std::mem::swap(&mut buf.prev, &mut buf.curr);
    }
    buf.prev[m - 1]
}

/// Reusable row storage for repeated DTW evaluations.
#[derive(Debug, Default, Clone)]
pub struct DtwBuffer {
    prev: Vec<f64>,
    curr: Vec<f64>,
}

/// Univariate DTW with absolute-difference local cost.
pub fn dtw_uts(x: &[f64], y: &[f64], params: &DtwParams) -> Result<f64> {
    let mut buf = DtwBuffer::default();
    dtw_uts_with(x, y, params, &mut buf)
}

pub fn dtw_uts_with(x: &[f64], y: &[f64], params: &DtwParams, buf: &mut DtwBuffer) -> Result<f64> {
    dtw_uts_cost(x, y, params, LocalCost::Absolute, buf)
}

/// Local cost of aligning two univariate samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalCost {
    /// `|a - b|`, used for ranking hash codes.
    Absolute,
    /// `(a - b)²`, the univariate case of dependent DTW.
    Squared,
}

/// Univariate DTW with a chosen local cost.
pub fn dtw_uts_cost(x: &[f64], y: &[f64], params: &DtwParams, cost: LocalCost, buf: &mut DtwBuffer) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Shape("DTW on an empty sequence".into()));
    }
    let w = params.window(x.len(), y.len());
    Ok(match cost {
        LocalCost::Absolute => dtw_banded(x.len(), y.len(), w, |i, j| (x[i] - y[j]).abs(), buf),
        LocalCost::Squared => dtw_banded(x.len(), y.len(), w, |i, j| (x[i] - y[j]) * (x[i] - y[j]), buf),
    })
}

/// Dependent multivariate DTW: one warping path, squared L2 local cost across all tracks.
pub fn dtw_dependent(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, params: &DtwParams) -> Result<f64> {
    let mut buf = DtwBuffer::default();
    dtw_dependent_with(x, y, params, &mut buf)
}

pub fn dtw_dependent_with(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    params: &DtwParams,
    buf: &mut DtwBuffer,
) -> Result<f64> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("track count {} vs {}", x.ncols(), y.ncols())));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::Shape("DTW on an empty sequence".into()));
    }
    let (n, m) = (x.nrows(), y.nrows());
    let w = params.window(n, m);
    match (x.as_slice(), y.as_slice()) {
        (Some(xs), Some(ys)) => {
            let d = x.ncols();
            Ok(dtw_banded(n, m, w, |i, j| squared_euclidean(&xs[i * d..(i + 1) * d], &ys[j * d..(j + 1) * d]), buf))
        }
        _ => Ok(dtw_banded(
            n,
            m,
            w,
            |i, j| x.row(i).iter().zip(y.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum(),
            buf,
        )),
    }
}

/// DTW between matching tracks of two `t × d` matrices; entry `j` compares column `j`.
pub fn dtw_per_track(query: ArrayView2<'_, f64>, window: ArrayView2<'_, f64>, params: &DtwParams) -> Result<Vec<f64>> {
    if query.dim() != window.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", query.dim(), window.dim())));
    }
    let mut buf = DtwBuffer::default();
    (0..query.ncols())
        .map(|j| {
            let q = query.column(j).to_vec();
            let c = window.column(j).to_vec();
            dtw_uts_with(&q, &c, params, &mut buf)
        })
        .collect()
}
