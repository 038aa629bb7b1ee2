//! Seeded synthetic corpora: a piecewise process of linear, constant and
//! first-order step-response segments, and a fixture with planted per-track motifs.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultivariateTimeSeries;

/// Piecewise corpus sized so that stride-1 windowing yields exactly `num_windows` windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub num_windows: usize,
    pub window_len: usize,
    pub tracks: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { num_windows: 10_000, window_len: 120, tracks: 3, noise: 0.05, seed: 0 }
    }
}

impl CorpusConfig {
    pub fn series_len(&self) -> usize {
        self.num_windows + self.window_len - 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Linear,
    Constant,
    StepResponse,
}

pub fn corpus(cfg: &CorpusConfig) -> Result<MultivariateTimeSeries> {
    if cfg.num_windows == 0 || cfg.window_len < 2 || cfg.tracks == 0 {
        return Err(Error::InvalidConfig("corpus needs windows ≥ 1, t ≥ 2, d ≥ 1".into()));
    }
    let n = cfg.series_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let seg_min = (cfg.window_len / 4).max(2);
    let seg_max = (cfg.window_len * 3 / 2).max(seg_min + 1);
    let mut values = Array2::zeros((n, cfg.tracks));
    for j in 0..cfg.tracks {
        let mut level: f64 = rng.random_range(-1.0..1.0);
        let mut i = 0;
        while i < n {
            let len = rng.random_range(seg_min..seg_max).min(n - i);
            let kind = match rng.random_range(0..3) {
                0 => Segment::Linear,
                1 => Segment::Constant,
                _ => Segment::StepResponse,
            };
            let target: f64 = rng.random_range(-2.0..2.0);
            let tau = rng.random_range(0.05..0.4) * len as f64;
            for s in 0..len {
                let x = s as f64;
                let y = match kind {
                    Segment::Linear => level + (target - level) * x / len as f64,
                    Segment::Constant => target,
                    Segment::StepResponse => target + (level - target) * (-x / tau).exp(),
                };
                values[[i + s, j]] = y + noise.sample(&mut rng);
            }
            level = match kind {
                Segment::Linear | Segment::Constant => target,
                Segment::StepResponse => target + (level - target) * (-(len as f64) / tau).exp(),
            };
            i += len;
        }
    }
    let names = (0..cfg.tracks).map(|j| format!("track_{j}")).collect();
    Ok(MultivariateTimeSeries::new(values, names)?
        .with_note(format!("synthetic piecewise corpus, seed {}, noise {}", cfg.seed, cfg.noise)))
}

/// Number of distinct planted motif shapes.
pub const MOTIF_KINDS: usize = 4;

/// Motif shape `kind` at phase `u ∈ [0, 1]`.
pub fn motif(kind: usize, u: f64) -> f64 {
    match kind % MOTIF_KINDS {
        0 => (2.0 * PI * u).sin(),
        1 => (-((u - 0.5) / 0.12).powi(2)).exp() * 2.0 - 0.5,
        2 => 2.0 * (u * 3.0).fract() - 1.0,
        _ => {
            if u < 0.5 {
                -1.0
            } else {
                1.0
            }
        }
    }
}

/// One planted occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planted {
    pub track: usize,
    pub start: usize,
    pub kind: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub len: usize,
    pub window_len: usize,
    pub tracks: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self { len: 30_000, window_len: 64, tracks: 3, noise: 0.1, seed: 0 }
    }
}

/// Every track independently receives motif occurrences of random kind at
/// random gaps over a noisy slow drift, so windows that match the query on
/// one track are unrelated on the others.
pub fn planted(cfg: &PlantedConfig) -> Result<(MultivariateTimeSeries, Vec<Planted>)> {
    let t = cfg.window_len;
    if t < 4 || cfg.tracks == 0 || cfg.len < 2 * t {
        return Err(Error::InvalidConfig("planted fixture needs t ≥ 4, d ≥ 1, n ≥ 2t".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut values = Array2::zeros((cfg.len, cfg.tracks));
    let mut occurrences = Vec::new();
    for j in 0..cfg.tracks {
        let mut drift = 0.0;
        for i in 0..cfg.len {
            drift += 0.02 * noise.sample(&mut rng);
            values[[i, j]] = drift + noise.sample(&mut rng);
        }
        let mut start = rng.random_range(0..t);
        while start + t <= cfg.len {
            let kind = rng.random_range(0..MOTIF_KINDS);
            let amp = rng.random_range(0.8..1.5);
            let base = values[[start, j]];
            for s in 0..t {
                values[[start + s, j]] = base + amp * motif(kind, s as f64 / (t - 1) as f64) + noise.sample(&mut rng);
            }
            occurrences.push(Planted { track: j, start, kind });
            start += t + rng.random_range(t / 4..t);
        }
    }
    let names = (0..cfg.tracks).map(|j| format!("track_{j}")).collect();
    let series =
        MultivariateTimeSeries::new(values, names)?.with_note(format!("planted motif fixture, seed {}", cfg.seed));
    Ok((series, occurrences))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_shape_and_determinism() {
        let cfg = CorpusConfig { num_windows: 500, window_len: 20, tracks: 3, noise: 0.05, seed: 7 };
        let a = corpus(&cfg).unwrap();
        assert_eq!(a.len(), 519);
        assert_eq!(a.dims(), 3);
        assert_eq!(a.values(), corpus(&cfg).unwrap().values());
        let b = corpus(&CorpusConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.values(), b.values());
        assert!(a.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn planted_occurrences_are_in_range_and_disjoint() {
        let cfg = PlantedConfig { len: 3000, ..Default::default() };
        let (s, occ) = planted(&cfg).unwrap();
        assert_eq!(s.len(), 3000);
        for j in 0..cfg.tracks {
            let mut starts: Vec<usize> = occ.iter().filter(|o| o.track == j).map(|o| o.start).collect();
            starts.sort();
            assert!(starts.len() > 10);
            assert!(starts.windows(2).all(|p| p[1] >= p[0] + cfg.window_len));
            assert!(starts.iter().all(|&st| st + cfg.window_len <= s.len()));
        }
        for k in 0..MOTIF_KINDS {
            assert!(occ.iter().any(|o| o.kind == k));
        }
    }
}
