use ndarray::{Array2, ArrayView2};

use super::DtwParams;
use crate::error::{Error, Result};

/// Centroid change (max absolute entry difference) below which DBA stops early.
pub const DBA_TOLERANCE: f64 = 1e-9;

/// Optimal dependent-DTW warping path between `x` and `y` as `(i, j)` pairs.
///
/// Ties during backtracking prefer the diagonal, then the step in `x`, then the step in `y`.
pub fn dtw_dependent_path(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    params: &DtwParams,
) -> Result<Vec<(usize, usize)>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("track count {} vs {}", x.ncols(), y.ncols())));
    }
    let (n, m) = (x.nrows(), y.nrows());
    if n == 0 || m == 0 {
        return Err(Error::Shape("DTW on an empty sequence".into()));
    }
    let w = params.window(n, m);
    let mut acc = Array2::from_elem((n, m), f64::INFINITY);
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(m - 1);
        for j in lo..=hi {
            let cost: f64 = x.row(i).iter().zip(y.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[[i - 1, j - 1]] } else { f64::INFINITY };
                let up = if i > 0 { acc[[i - 1, j]] } else { f64::INFINITY };
                let left = if j > 0 { acc[[i, j - 1]] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[[i, j]] = cost + best;
        }
    }

    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[[i - 1, j - 1]];
            let up = acc[[i - 1, j]];
            let left = acc[[i, j - 1]];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(path)
}

/// DTW barycenter averaging of equally shaped `t × d` sequences.
///
/// Each pass aligns every sequence to the centroid with dependent DTW and replaces
/// each centroid step with the mean of the sequence steps warped onto it.
pub fn dba_average(
    sequences: &[ArrayView2<'_, f64>],
    init: ArrayView2<'_, f64>,
    iterations: usize,
    params: &DtwParams,
) -> Result<Array2<f64>> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput);
    }
    if iterations == 0 {
        return Err(Error::InvalidConfig("DBA needs at least one iteration".into()));
    }
    let shape = init.dim();
    if let Some(bad) = sequences.iter().find(|s| s.dim() != shape) {
        return Err(Error::Shape(format!("{:?} vs centroid {:?}", bad.dim(), shape)));
    }

    let (t, d) = shape;
    let mut centroid = init.to_owned();
    for _ in 0..iterations {
        let mut sums = Array2::<f64>::zeros((t, d));
        let mut counts = vec![0usize; t];
        for seq in sequences {
            for (ci, si) in dtw_dependent_path(centroid.view(), *seq, params)? {
                let mut row = sums.row_mut(ci);
                row += &seq.row(si);
                counts[ci] += 1;
            }
        }
        for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
            row /= c as f64;
        }
        let change = sums.iter().zip(centroid.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        centroid = sums;
        if change < DBA_TOLERANCE {
            break;
        }
    }
    Ok(centroid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::dtw_dependent;
    use ndarray::{array, Array2};

    fn col(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn fixpoint_when_all_equal() {
        let q = array![[0.0, 1.0], [1.0, 0.5], [2.0, -1.0]];
        let out = dba_average(&[q.view(), q.view()], q.view(), 10, &DtwParams::unconstrained()).unwrap();
        assert_eq!(out, q);
    }

    #[test]
    fn constant_sequences_average_pointwise() {
        // Brute force: every cell costs 4, so the 3-cell diagonal is the unique optimum
        // and each centroid step receives exactly one 0 and one 2.
        let a = col(&[0.0, 0.0, 0.0]);
        let b = col(&[2.0, 2.0, 2.0]);
        let out = dba_average(&[a.view(), b.view()], a.view(), 10, &DtwParams::unconstrained()).unwrap();
        assert_eq!(out, col(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn empty_set_is_rejected() {
        let a = col(&[0.0, 1.0]);
        assert!(matches!(dba_average(&[], a.view(), 3, &DtwParams::default()), Err(Error::EmptyInput)));
    }

    #[test]
    fn path_is_monotone_and_complete() {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 2.0]);
        let y = col(&[0.0, 0.0, 1.0, 2.0, 3.0]);
        let p = dtw_dependent_path(x.view(), y.view(), &DtwParams::unconstrained()).unwrap();
        assert_eq!(p.first(), Some(&(0, 0)));
        assert_eq!(p.last(), Some(&(4, 4)));
        for pair in p.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            assert!(b.0 - a.0 <= 1 && b.1 - a.1 <= 1 && (b.0 + b.1) > (a.0 + a.1));
        }
        let along: f64 = p.iter().map(|&(i, j)| (x[[i, 0]] - y[[j, 0]]).powi(2)).sum();
        let dtw = dtw_dependent(x.view(), y.view(), &DtwParams::unconstrained()).unwrap();
        assert_eq!(along, dtw);
    }

    #[test]
    fn beats_elementwise_mean_on_shifted_bumps() {
        let bump = |shift: usize| {
            let v: Vec<f64> = (0..30)
                .map(|i| {
                    let x = i as f64 - 10.0 - shift as f64;
                    (-x * x / 8.0).exp()
                })
                .collect();
            col(&v)
        };
        let seqs = [bump(0), bump(3), bump(6), bump(9)];
        let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
        let params = DtwParams { band_frac: 0.5 };
        let dba = dba_average(&views, seqs[0].view(), 10, &params).unwrap();
        let mut mean = Array2::<f64>::zeros((30, 1));
        for s in &seqs {
            mean += s;
        }
        mean /= seqs.len() as f64;
        let total =
            |c: &Array2<f64>| -> f64 { views.iter().map(|s| dtw_dependent(c.view(), *s, &params).unwrap()).sum() };
        assert!(total(&dba) <= total(&mean), "{} vs {}", total(&dba), total(&mean));
    }
}
