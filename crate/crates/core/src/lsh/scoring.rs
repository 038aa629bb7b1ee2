use super::candidates::{min_max_normalize, CandidateSet};
use super::model::{HashIndex, LshModel};
use super::RankMetric;
use crate::distance::{banded_cell_count, dtw_uts_with, euclidean, DtwBuffer};
use crate::error::{Error, Result};
use crate::window::{Query, WindowSet};

/// Work done while ranking; counts DTW cells or ED terms on the hash codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreStats {
    pub distance_evaluations: u64,
    pub elementary_ops: u64,
}

pub fn score_candidates(
    model: &LshModel,
    query: &Query,
    windows: &WindowSet,
    candidates: CandidateSet,
) -> Result<CandidateSet> {
    let index = model.index(windows)?;
    score_candidates_indexed(model, query, &index, candidates).map(|(c, _)| c)
}

/// Ranks candidates by the mean code distance over all atomics of all tables,
/// then min-max normalizes the means to `[0, 1]` (0 = most similar).
pub fn score_candidates_indexed(
    model: &LshModel,
    query: &Query,
    index: &HashIndex,
    mut candidates: CandidateSet,
) -> Result<(CandidateSet, ScoreStats)> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let q = model.encode(query.values.view())?;
    let (tables, atomics, t) = (model.num_tables(), model.hashes_per_table(), model.window_len);
    let params = model.config.dtw_params();
    let band = params.window(t, t);
    let cells = banded_cell_count(t, t, band);
    let mut buf = DtwBuffer::default();
    let mut stats = ScoreStats::default();

    let mut raw = Vec::with_capacity(candidates.len());
    for entry in &mut candidates.entries {
        entry.table_distances.clear();
        for table in 0..tables {
            let mut sum = 0.0;
            for atomic in 0..atomics {
                let qc = q.get(table, atomic);
                let xc = index.code(entry.window, table, atomic);
                sum += match model.config.rank_metric {
                    RankMetric::Dtw => {
                        stats.elementary_ops += cells;
                        dtw_uts_with(qc, xc, &params, &mut buf)?
                    }
                    RankMetric::Ed => {
                        stats.elementary_ops += t as u64;
                        euclidean(qc, xc)?
                    }
                };
                stats.distance_evaluations += 1;
            }
            entry.table_distances.push(sum / atomics as f64);
        }
        raw.push(entry.table_distances.iter().sum::<f64>() / tables as f64);
    }

    for (entry, score) in candidates.entries.iter_mut().zip(min_max_normalize(&raw)) {
        entry.score = score;
    }
    candidates.entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.window.cmp(&b.window)));
    Ok((candidates, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::candidates::{generate_candidates, CandidateEntry};
    use crate::lsh::LshConfig;
    use crate::series::MultivariateTimeSeries;
    use crate::window::extract_windows;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn walk(n: usize, d: usize, seed: u64) -> MultivariateTimeSeries {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut level = vec![0.0; d];
        MultivariateTimeSeries::from_values(Array2::from_shape_fn((n, d), |(_, j)| {
            level[j] += rng.random_range(-1.0..1.0);
            level[j]
        }))
        .unwrap()
    }

    fn set_of(windows: &[usize], tables: usize) -> CandidateSet {
        CandidateSet {
            entries: windows
                .iter()
                .map(|&w| CandidateEntry { window: w, tables: 1, score: 0.0, table_distances: vec![] })
                .collect(),
            expansions: 0,
            omegas: vec![],
            num_tables: tables,
        }
    }

    #[test]
    fn self_match_scores_zero_and_ranks_first() {
        let s = walk(400, 3, 5);
        let ws = extract_windows(&s, 30, 1).unwrap();
        for metric in [RankMetric::Dtw, RankMetric::Ed] {
            let model = LshModel::generate(3, 30, LshConfig::default().with_metric(metric), 2).unwrap();
            let q = Query::from_window(&ws.windows()[123]);
            let c = generate_candidates(&model, &q, &ws).unwrap();
            let scored = score_candidates(&model, &q, &ws, c).unwrap();
            assert_eq!(scored.entries[0].window, 123);
            assert_eq!(scored.entries[0].score, 0.0);
            assert!(scored.entries.iter().all(|e| (0.0..=1.0).contains(&e.score)));
            assert!(scored.entries.windows(2).all(|p| p[0].score <= p[1].score));
        }
    }

    #[test]
    fn identical_candidates_all_score_zero() {
        let s = walk(100, 2, 1);
        let ws = extract_windows(&s, 10, 1).unwrap();
        let mut windows = vec![ws.windows()[3].clone(); 3];
        for (i, w) in windows.iter_mut().enumerate() {
            w.start = i;
        }
        let same = WindowSet::from_windows(windows, 1).unwrap();
        let model = LshModel::generate(2, 10, LshConfig::default(), 1).unwrap();
        let q = Query::from_window(&ws.windows()[50]);
        let scored = score_candidates(&model, &q, &same, set_of(&[0, 1, 2], 5)).unwrap();
        assert!(scored.entries.iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn empty_candidates_rejected() {
        let s = walk(50, 2, 1);
        let ws = extract_windows(&s, 10, 1).unwrap();
        let model = LshModel::generate(2, 10, LshConfig::default(), 1).unwrap();
        let q = Query::from_window(&ws.windows()[0]);
        assert!(score_candidates(&model, &q, &ws, set_of(&[], 5)).is_err());
    }

    #[test]
    fn ranking_cost_does_not_depend_on_track_count() {
        let mut ops = Vec::new();
        for d in [2, 8, 32] {
            let s = walk(200, d, 9);
            let ws = extract_windows(&s, 24, 1).unwrap();
            let model = LshModel::generate(d, 24, LshConfig::default(), 4).unwrap();
            let index = model.index(&ws).unwrap();
            let q = Query::from_window(&ws.windows()[17]);
            let (_, stats) = score_candidates_indexed(&model, &q, &index, set_of(&[1, 5, 9, 40, 77], 5)).unwrap();
            ops.push(stats);
        }
        assert!(ops.windows(2).all(|p| p[0] == p[1]), "{ops:?}");
    }

    #[test]
    fn masked_weight_ignores_other_tracks() {
        let s = walk(300, 3, 21);
        let ws = extract_windows(&s, 16, 1).unwrap();
        let mut model = LshModel::generate(3, 16, LshConfig::default(), 8).unwrap();
        model.set_weight(&[0.0, 3f64.sqrt(), 0.0]).unwrap();
        let q = Query::from_window(&ws.windows()[100]);
        let cands: Vec<usize> = (0..ws.len()).step_by(7).collect();
        let base = score_candidates(&model, &q, &ws, set_of(&cands, 5)).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noisy: Vec<_> = ws
            .windows()
            .iter()
            .map(|w| {
                let mut w = w.clone();
                for i in 0..w.len() {
                    w.values[[i, 0]] = rng.random_range(-5.0..5.0);
                    w.values[[i, 2]] = rng.random_range(-5.0..5.0);
                }
                w
            })
            .collect();
        let noisy = WindowSet::from_windows(noisy, 1).unwrap();
        let perturbed = score_candidates(&model, &q, &noisy, set_of(&cands, 5)).unwrap();
        let order = |c: &CandidateSet| c.entries.iter().map(|e| e.window).collect::<Vec<_>>();
        assert_eq!(order(&base), order(&perturbed));
    }
}
