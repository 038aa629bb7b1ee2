//! Sliding-window extraction and per-window, per-track z-normalization.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateTimeSeries;

/// Tracks whose population standard deviation falls below this are mapped to zeros.
pub const DEGENERATE_STD: f64 = 1e-9;

/// Z-normalizes every column of a `t × d` matrix using the population standard deviation.
pub fn normalize_window(raw: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = raw.to_owned();
    let t = raw.nrows() as f64;
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / t;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        let std = var.sqrt();
        if std < DEGENERATE_STD {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    out
}

/// A normalized slice of the source series.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub values: Array2<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    /// Column `j` copied into a contiguous vector.
    pub fn track(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QueryProvenance {
    UserSelected { start: usize },
    DbaUpdated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub values: Array2<f64>,
    pub provenance: QueryProvenance,
}

impl Query {
    /// Normalizes `raw` and wraps it as a query.
    pub fn new(raw: ArrayView2<'_, f64>, provenance: QueryProvenance) -> Result<Self> {
        if raw.nrows() < 2 || raw.ncols() == 0 {
            return Err(Error::Shape(format!("query must be at least 2 × 1, got {:?}", raw.dim())));
        }
        Ok(Self { values: normalize_window(raw), provenance })
    }

    pub fn from_window(window: &Window) -> Self {
        Self { values: window.values.clone(), provenance: QueryProvenance::UserSelected { start: window.start } }
    }

    /// Slices and normalizes the source series at `start`.
    pub fn from_series(series: &MultivariateTimeSeries, start: usize, t: usize) -> Result<Self> {
        let n = series.len();
        if t > n || start > n - t {
            return Err(Error::WindowTooLarge { t: start + t, n });
        }
        let raw = series.values().slice(ndarray::s![start..start + t, ..]);
        Self::new(raw, QueryProvenance::UserSelected { start })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn track(&self, j: usize) -> Vec<f64> {
        self.values.column(j).to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct WindowSet {
    windows: Vec<Window>,
    t: usize,
    stride: usize,
    dims: usize,
}

impl WindowSet {
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn get(&self, index: usize) -> Result<&Window> {
        self.windows.get(index).ok_or(Error::IndexOutOfRange { index, len: self.windows.len() })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.t
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Index of the window starting at `start`, if it lies on the stride grid.
    pub fn index_of_start(&self, start: usize) -> Option<usize> {
        start.is_multiple_of(self.stride).then_some(start / self.stride).filter(|&i| i < self.windows.len())
    }

    /// Builds a set from already-normalized windows (used by fixtures and tests).
    pub fn from_windows(windows: Vec<Window>, stride: usize) -> Result<Self> {
        let first = windows.first().ok_or(Error::EmptyInput)?;
        let (t, dims) = first.values.dim();
        if windows.iter().any(|w| w.values.dim() != (t, dims)) {
            return Err(Error::Shape("windows differ in shape".into()));
        }
        Ok(Self { windows, t, stride, dims })
    }
}

/// Cuts `series` into normalized windows of length `t`, `stride` steps apart.
pub fn extract_windows(series: &MultivariateTimeSeries, t: usize, stride: usize) -> Result<WindowSet> {
    let n = series.len();
    if t > n {
        return Err(Error::WindowTooLarge { t, n });
    }
    if t < 2 {
        return Err(Error::InvalidConfig(format!("window length must be ≥ 2, got {t}")));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be ≥ 1".into()));
    }
    let count = (n - t) / stride + 1;
    let windows = (0..count)
        .map(|i| {
            let start = i * stride;
            Window { start, values: normalize_window(series.values().slice(ndarray::s![start..start + t, ..])) }
        })
        .collect();
    Ok(WindowSet { windows, t, stride, dims: series.dims() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
    }

    // Independent two-pass statistics, written out longhand.
    fn population_stats(xs: &[f64]) -> (f64, f64) {
        let mut sum = 0.0;
        for x in xs {
            sum += x;
        }
        let mean = sum / xs.len() as f64;
        let mut ss = 0.0;
        for x in xs {
            ss += (x - mean) * (x - mean);
        }
        (mean, (ss / xs.len() as f64).sqrt())
    }

    #[test]
    fn normalizes_simple_track() {
        let (mean, std) = population_stats(&[2.0, 4.0, 6.0]);
        assert!((std - 1.632_993_161_855_452).abs() < 1e-12);
        let out = normalize_window(column(&[2.0, 4.0, 6.0]).view());
        let expected = [(2.0 - mean) / std, 0.0, (6.0 - mean) / std];
        for (got, want) in out.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((out[[0, 0]] + 1.224_744_871_391_589).abs() < 1e-9);
    }

    #[test]
    fn degenerate_track_maps_to_zero() {
        let out = normalize_window(column(&[5.0, 5.0, 5.0]).view());
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_track() {
        let out = normalize_window(column(&[0.0, 1.0]).view());
        assert_eq!(out, column(&[-1.0, 1.0]));
    }

    #[test]
    fn window_counts_and_starts() {
        let s = MultivariateTimeSeries::from_values(column(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        let starts =
            |stride| extract_windows(&s, 3, stride).unwrap().windows().iter().map(|w| w.start).collect::<Vec<_>>();
        assert_eq!(starts(1), vec![0, 1, 2]);
        assert_eq!(starts(2), vec![0, 2]);

        let short = MultivariateTimeSeries::from_values(column(&[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(extract_windows(&short, 4, 1), Err(Error::WindowTooLarge { t: 4, n: 3 })));
    }

    #[test]
    fn query_bounds() {
        let s = MultivariateTimeSeries::from_values(array![[1.0], [2.0], [4.0], [8.0]]).unwrap();
        assert!(Query::from_series(&s, 2, 2).is_ok());
        assert!(matches!(Query::from_series(&s, 3, 2), Err(Error::WindowTooLarge { .. })));
        let ws = extract_windows(&s, 2, 1).unwrap();
        assert_eq!(Query::from_series(&s, 1, 2).unwrap().values, ws.windows()[1].values);
    }

    fn matrix_strategy() -> impl Strategy<Value = Array2<f64>> {
        (2usize..12, 1usize..4).prop_flat_map(|(t, d)| {
            proptest::collection::vec(-100.0f64..100.0, t * d)
                .prop_map(move |v| Array2::from_shape_vec((t, d), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn window_offsets_follow_stride(n in 2usize..60, t in 2usize..20, stride in 1usize..7) {
            prop_assume!(t <= n);
            let s = MultivariateTimeSeries::from_values(Array2::from_shape_fn((n, 2), |(i, j)| (i * (j + 1)) as f64)).unwrap();
            let ws = extract_windows(&s, t, stride).unwrap();
            prop_assert_eq!(ws.len(), (n - t) / stride + 1);
            for (i, w) in ws.windows().iter().enumerate() {
                prop_assert_eq!(w.start, i * stride);
                prop_assert_eq!(ws.index_of_start(w.start), Some(i));
            }
        }

        #[test]
        fn normalization_invariants(raw in matrix_strategy()) {
            let out = normalize_window(raw.view());
            for (j, col) in out.axis_iter(Axis(1)).enumerate() {
                let (_, raw_std) = population_stats(&raw.column(j).to_vec());
                let (mean, std) = population_stats(&col.to_vec());
                if raw_std < DEGENERATE_STD {
                    prop_assert!(col.iter().all(|&v| v == 0.0));
                } else {
                    prop_assert!(mean.abs() < 1e-6);
                    prop_assert!((std - 1.0).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn normalization_is_idempotent(raw in matrix_strategy()) {
            let once = normalize_window(raw.view());
            let twice = normalize_window(once.view());
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn normalization_ignores_affine_scaling(raw in matrix_strategy(), alpha in 0.01f64..50.0, beta in -100.0f64..100.0) {
            let base = normalize_window(raw.view());
            let scaled = normalize_window(raw.mapv(|v| alpha * v + beta).view());
            // Affine maps can push a nearly flat track across the degenerate cut-off.
            for j in 0..raw.ncols() {
                let (_, s0) = population_stats(&raw.column(j).to_vec());
                if s0 < 1e-6 || alpha * s0 < 1e-6 { continue; }
                for i in 0..raw.nrows() {
                    prop_assert!((base[[i, j]] - scaled[[i, j]]).abs() < 1e-6);
                }
            }
        }
    }
}
