use serde::{Deserialize, Serialize};

use super::model::{Codes, HashIndex, LshModel};
use crate::error::{Error, Result};
use crate::window::{Query, WindowSet};

/// `|h(q_i) - h(x_i)| ≤ ω/2`, inclusive.
pub fn projection_collision(hq: f64, hx: f64, omega: f64) -> bool {
    (hq - hx).abs() <= omega / 2.0
}

/// At least `t_s` projection collisions across the two codes.
pub fn hash_collision(q_code: &[f64], x_code: &[f64], omega: f64, t_s: usize) -> bool {
    q_code.iter().zip(x_code).filter(|(q, x)| projection_collision(**q, **x, omega)).count() >= t_s
}

/// One pruned window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub window: usize,
    /// Bit `i` is set when the window collided under table `i`.
    pub tables: u64,
    /// Normalized ranking score in `[0, 1]`; lower is more similar. Zero until scored.
    pub score: f64,
    /// Mean code distance per table; empty until scored.
    pub table_distances: Vec<f64>,
}

impl CandidateEntry {
    pub fn collided_under(&self, table: usize) -> bool {
        self.tables & (1 << table) != 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Ascending window index until scored, then ascending `(score, window)`.
    pub entries: Vec<CandidateEntry>,
    /// Radius expansions applied beyond the initial bucket width.
    pub expansions: usize,
    /// Effective bucket width per atomic function, `[table][atomic]` flattened.
    pub omegas: Vec<f64>,
    pub num_tables: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, window: usize) -> bool {
        self.entries.iter().any(|e| e.window == window)
    }

    /// Windows that collided under `table`, ranked by that table's distance and
    /// min-max normalized within the table. Requires scored entries.
    pub fn table_ranking(&self, table: usize) -> Vec<(usize, f64)> {
        let mut members: Vec<(usize, f64)> = self
            .entries
            .iter()
            .filter(|e| e.collided_under(table) && table < e.table_distances.len())
            .map(|e| (e.window, e.table_distances[table]))
            .collect();
        members.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let raw: Vec<f64> = members.iter().map(|m| m.1).collect();
        for (m, s) in members.iter_mut().zip(min_max_normalize(&raw)) {
            m.1 = s;
        }
        members
    }
}

/// Min-max scaling to `[0, 1]`; a zero range maps everything to 0.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    raw.iter().map(|&v| if range > 0.0 { (v - lo) / range } else { 0.0 }).collect()
}

/// Query-aware radius per atomic function: the median absolute projection gap
/// between the query and an evenly spaced sample of windows.
fn estimate_radii(model: &LshModel, index: &HashIndex, q: &Codes) -> Vec<f64> {
    let n = index.len();
    let sample = model.config.radius_sample.min(n).max(1);
    let picks: Vec<usize> = (0..sample).map(|s| s * n / sample).collect();
    let mut radii = Vec::with_capacity(q.tables * q.atomics);
    let mut gaps = Vec::with_capacity(sample * q.t);
    for table in 0..q.tables {
        for atomic in 0..q.atomics {
            if let Some(r) = model.config.initial_radius {
                radii.push(r);
                continue;
            }
            gaps.clear();
            let qc = q.get(table, atomic);
            for &w in &picks {
                let xc = index.code(w, table, atomic);
                gaps.extend(qc.iter().zip(xc).map(|(a, b)| (a - b).abs()));
            }
            let mid = gaps.len() / 2;
            let (_, median, _) = gaps.select_nth_unstable_by(mid, f64::total_cmp);
            let mut r = *median;
            if r <= 0.0 {
                r = gaps.iter().sum::<f64>() / gaps.len() as f64;
            }
            radii.push(r);
        }
    }
    radii
}

/// Prunes the windows to those colliding with the query under at least one
/// table, growing the bucket width by `c` until enough candidates are found.
pub fn generate_candidates(model: &LshModel, query: &Query, windows: &WindowSet) -> Result<CandidateSet> {
    let index = model.index(windows)?;
    generate_candidates_indexed(model, query, &index)
}

pub fn generate_candidates_indexed(model: &LshModel, query: &Query, index: &HashIndex) -> Result<CandidateSet> {
    let q = model.encode(query.values.view())?;
    let n = index.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let (tables, atomics, t) = (q.tables, q.atomics, q.t);
    let t_s = model.collision_threshold();
    let base: Vec<f64> = estimate_radii(model, index, &q).into_iter().map(|r| model.config.omega_factor * r).collect();

    let target = model.config.top_k.max((model.config.min_candidate_frac * n as f64).ceil() as usize).min(n);
    let max_level = model.config.max_expansions;
    let omegas_at: Vec<Vec<f64>> = (0..=max_level)
        .map(|e| {
            let scale = model.config.approximation_ratio.powi(e as i32);
            base.iter().map(|o| o * scale).collect()
        })
        .collect();

    // Collision level of a window under each table: the first expansion at
    // which all of its atomics collide, `NEVER` beyond the last expansion. An
    // atomic collides iff its t_s-th smallest gap is a projection collision.
    // Gaps are non-negative, so their bit patterns order like the values.
    const NEVER: usize = usize::MAX;
    let mut table_levels = vec![NEVER; n * tables];
    let mut gaps = vec![0u64; t];
    for w in 0..n {
        for table in 0..tables {
            let mut level = 0;
            for a in 0..atomics {
                let qc = q.get(table, a);
                let xc = index.code(w, table, a);
                for ((g, x), y) in gaps.iter_mut().zip(qc).zip(xc) {
                    *g = (x - y).abs().to_bits();
                }
                let (_, kth, _) = gaps.select_nth_unstable(t_s - 1);
                let kth = f64::from_bits(*kth);
                let h = table * atomics + a;
                while level <= max_level && !projection_collision(kth, 0.0, omegas_at[level][h]) {
                    level += 1;
                }
                if level > max_level {
                    level = NEVER;
                    break;
                }
            }
            table_levels[w * tables + table] = level;
        }
    }

    let window_level = |w: usize| table_levels[w * tables..(w + 1) * tables].iter().copied().min().unwrap_or(NEVER);
    let mut per_level = vec![0usize; max_level + 1];
    for w in 0..n {
        let l = window_level(w);
        if l != NEVER {
            per_level[l] += 1;
        }
    }
    let mut count = 0;
    let mut expansions = max_level;
    for (e, c) in per_level.iter().enumerate() {
        count += c;
        if count >= target {
            expansions = e;
            break;
        }
    }
    if count == 0 {
        return Err(Error::EmptyCandidates { expansions });
    }
    let entries = (0..n)
        .filter_map(|w| {
            let mask = (0..tables)
                .filter(|&table| table_levels[w * tables + table] <= expansions)
                .fold(0u64, |m, table| m | (1 << table));
            (mask != 0).then_some(CandidateEntry { window: w, tables: mask, score: 0.0, table_distances: Vec::new() })
        })
        .collect();
    Ok(CandidateSet { entries, expansions, omegas: omegas_at[expansions].clone(), num_tables: tables })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::LshConfig;
    use crate::series::MultivariateTimeSeries;
    use crate::window::{extract_windows, Window};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn projection_examples() {
        assert!(projection_collision(3.0, 3.2, 1.0));
        assert!(projection_collision(0.0, 0.5, 1.0));
        assert!(!projection_collision(0.0, 0.51, 1.0));
    }

    #[test]
    fn hash_collision_examples() {
        let q = [1.0, 2.0, 3.0, 4.0];
        assert!(hash_collision(&q, &q, 0.1, 3));
        let x = [1.0, 2.0, 9.0, 4.0];
        assert!(hash_collision(&q, &x, 1.0, 3));
        let x = [1.0, 9.0, 9.0, 4.0];
        assert!(!hash_collision(&q, &x, 1.0, 3));
    }

    fn random_series(n: usize, d: usize, seed: u64) -> MultivariateTimeSeries {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut level = vec![0.0; d];
        let values = Array2::from_shape_fn((n, d), |(_, j)| {
            level[j] += rng.random_range(-1.0..1.0);
            level[j]
        });
        MultivariateTimeSeries::from_values(values).unwrap()
    }

    /// Candidate membership via the reference collision predicates.
    fn brute_force(model: &LshModel, query: &Query, ws: &WindowSet, omegas: &[f64]) -> Vec<(usize, u64)> {
        let q = model.encode(query.values.view()).unwrap();
        let k = model.hashes_per_table();
        let t_s = model.collision_threshold();
        let mut out = Vec::new();
        for (i, w) in ws.windows().iter().enumerate() {
            let x = model.encode(w.values.view()).unwrap();
            let mut mask = 0u64;
            for table in 0..model.num_tables() {
                if (0..k).all(|a| hash_collision(q.get(table, a), x.get(table, a), omegas[table * k + a], t_s)) {
                    mask |= 1 << table;
                }
            }
            if mask != 0 {
                out.push((i, mask));
            }
        }
        out
    }

    #[test]
    fn self_window_is_always_a_candidate() {
        let s = random_series(300, 3, 1);
        let ws = extract_windows(&s, 20, 1).unwrap();
        let model = LshModel::generate(3, 20, LshConfig::default(), 7).unwrap();
        for start in [0, 57, 280] {
            let q = Query::from_window(&ws.windows()[start]);
            let c = generate_candidates(&model, &q, &ws).unwrap();
            let e = c.entries.iter().find(|e| e.window == start).unwrap();
            assert_eq!(e.tables, (1 << model.num_tables()) - 1);
        }
    }

    #[test]
    fn one_outlier_step_still_collides_at_t_minus_one() {
        let s = random_series(200, 2, 3);
        let ws = extract_windows(&s, 10, 1).unwrap();
        let cfg = LshConfig { collision_threshold: Some(9), ..Default::default() };
        let model = LshModel::generate(2, 10, cfg, 3).unwrap();
        let mut perturbed = ws.windows()[40].values.clone();
        perturbed[[4, 0]] += 1e3;
        perturbed[[4, 1]] -= 1e3;
        let mut all = ws.windows().to_vec();
        all.push(Window { start: 10_000, values: perturbed });
        let extended = WindowSet::from_windows(all, 1).unwrap();
        let q = Query::from_window(&ws.windows()[40]);
        let c = generate_candidates(&model, &q, &extended).unwrap();
        assert!(c.contains(extended.len() - 1));
    }

    #[test]
    fn adversarial_fixture_runs_out_of_expansions() {
        // Query sits at +1 on both tracks, every window at -1, so all gaps are large.
        let t = 6;
        let query =
            Query { values: Array2::from_elem((t, 2), 1.0), provenance: crate::window::QueryProvenance::DbaUpdated };
        let windows: Vec<Window> =
            (0..50).map(|i| Window { start: i * t, values: Array2::from_elem((t, 2), -1.0) }).collect();
        let ws = WindowSet::from_windows(windows, t).unwrap();
        let cfg = LshConfig { initial_radius: Some(1e-6), ..Default::default() };
        let model = LshModel::generate(2, t, cfg.clone(), 11).unwrap();

        let widest = 1e-6 * cfg.omega_factor * cfg.approximation_ratio.powi(cfg.max_expansions as i32);
        let omegas = vec![widest; model.num_tables() * model.hashes_per_table()];
        assert!(brute_force(&model, &query, &ws, &omegas).is_empty());

        assert!(matches!(generate_candidates(&model, &query, &ws), Err(Error::EmptyCandidates { expansions: 16 })));
    }

    #[test]
    fn normalization_edge_cases() {
        assert_eq!(min_max_normalize(&[0.0, 5.0]), vec![0.0, 1.0]);
        assert_eq!(min_max_normalize(&[2.0, 2.0, 2.0]), vec![0.0, 0.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fast_path_matches_reference_predicates(seed in 0u64..1000, start in 0usize..150, ts in 5usize..12) {
            let s = random_series(180, 3, seed);
            let ws = extract_windows(&s, 12, 1).unwrap();
            let cfg = LshConfig { collision_threshold: Some(ts.min(11)), ..Default::default() };
            let model = LshModel::generate(3, 12, cfg, seed).unwrap();
            let q = Query::from_window(&ws.windows()[start]);
            let c = generate_candidates(&model, &q, &ws).unwrap();
            let fast: Vec<(usize, u64)> = c.entries.iter().map(|e| (e.window, e.tables)).collect();
            prop_assert_eq!(fast, brute_force(&model, &q, &ws, &c.omegas));
        }

        #[test]
        fn candidates_grow_with_omega(seed in 0u64..1000, start in 0usize..150, r in 0.05f64..2.0) {
            let s = random_series(180, 2, seed);
            let ws = extract_windows(&s, 12, 1).unwrap();
            let small = LshConfig { initial_radius: Some(r), max_expansions: 0, min_candidate_frac: 1.0, ..Default::default() };
            let large = LshConfig { initial_radius: Some(r * 1.7), ..small.clone() };
            let q = Query::from_window(&ws.windows()[start]);
            let a = generate_candidates(&LshModel::generate(2, 12, small, seed).unwrap(), &q, &ws).unwrap();
            let b = generate_candidates(&LshModel::generate(2, 12, large, seed).unwrap(), &q, &ws).unwrap();
            for e in &a.entries {
                let other = b.entries.iter().find(|o| o.window == e.window);
                prop_assert!(other.is_some());
                prop_assert_eq!(other.unwrap().tables & e.tables, e.tables);
            }
        }
    }
}
