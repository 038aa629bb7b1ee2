use serde::{Deserialize, Serialize};

use crate::distance::DtwParams;
use crate::error::{Error, Result};

/// Distance used to rank candidates on their univariate hash codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMetric {
    Dtw,
    Ed,
}

impl RankMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            RankMetric::Dtw => "dtw",
            RankMetric::Ed => "ed",
        }
    }
}

impl std::str::FromStr for RankMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dtw" => Ok(RankMetric::Dtw),
            "ed" => Ok(RankMetric::Ed),
            other => Err(Error::InvalidConfig(format!("unknown rank metric {other:?}"))),
        }
    }
}

/// Hashing, pruning, ranking and learning parameters of a session.
///
/// Every field has a default, so a JSON config file may list only the overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LshConfig {
    /// Compound hash functions (hash tables), `l`.
    pub num_tables: usize,
    /// Atomic hash functions per table, `k`.
    pub hashes_per_table: usize,
    /// Bucket width as a multiple of the search radius: `ω = omega_factor · r`.
    pub omega_factor: f64,
    /// Fixed initial radius. `None` estimates it per atomic function from the
    /// median query-to-window projection gap over a sample of windows.
    pub initial_radius: Option<f64>,
    /// Projection collisions needed for a hash collision, `t_s`. `None` means `⌈0.8·t⌉`.
    pub collision_threshold: Option<usize>,
    /// Target false-negative rate. Stored as metadata only.
    pub false_negative_rate: f64,
    /// Radius growth factor per expansion, `c`.
    pub approximation_ratio: f64,
    pub max_expansions: usize,
    /// Windows sampled when estimating the initial radius.
    pub radius_sample: usize,
    /// Expansion stops once `max(top_k, ⌈min_candidate_frac · N⌉)` candidates exist.
    pub min_candidate_frac: f64,
    pub top_k: usize,
    pub rank_metric: RankMetric,
    /// Sakoe-Chiba half-width as a fraction of the query length.
    pub sakoe_chiba_frac: f64,
    /// Feedback learning rate `α`.
    pub learning_rate: f64,
    pub dba_iterations: usize,
}

impl Default for LshConfig {
    fn default() -> Self {
        Self {
            num_tables: 5,
            hashes_per_table: 3,
            omega_factor: 0.75,
            initial_radius: None,
            collision_threshold: None,
            false_negative_rate: 0.05,
            approximation_ratio: 1.3,
            max_expansions: 16,
            radius_sample: 1000,
            min_candidate_frac: 0.01,
            top_k: 50,
            rank_metric: RankMetric::Dtw,
            sakoe_chiba_frac: 0.05,
            learning_rate: 0.75,
            dba_iterations: 10,
        }
    }
}

impl LshConfig {
    pub fn with_metric(mut self, metric: RankMetric) -> Self {
        self.rank_metric = metric;
        self
    }

    pub fn dtw_params(&self) -> DtwParams {
        DtwParams { band_frac: self.sakoe_chiba_frac }
    }

    /// `t_s` for windows of length `t`.
    pub fn threshold_for(&self, t: usize) -> usize {
        self.collision_threshold
            .unwrap_or_else(|| ((0.8 * t as f64).ceil() as usize).clamp(1, t.saturating_sub(1).max(1)))
    }

    /// Checks the invariants that do not depend on the window length.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_tables == 0 || self.num_tables > 64 {
            return bad(format!("num_tables must be in 1..=64, got {}", self.num_tables));
        }
        if self.hashes_per_table == 0 {
            return bad("hashes_per_table must be ≥ 1".into());
        }
        if !(self.omega_factor > 0.0 && self.omega_factor.is_finite()) {
            return bad(format!("omega_factor must be > 0, got {}", self.omega_factor));
        }
        if let Some(r) = self.initial_radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("initial_radius must be > 0, got {r}"));
            }
        }
        if !(self.false_negative_rate > 0.0 && self.false_negative_rate < 1.0) {
            return bad("false_negative_rate must be in (0, 1)".into());
        }
        if !(self.approximation_ratio > 1.0 && self.approximation_ratio.is_finite()) {
            return bad("approximation_ratio must be > 1".into());
        }
        if self.radius_sample == 0 {
            return bad("radius_sample must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_candidate_frac) {
            return bad("min_candidate_frac must be in [0, 1]".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be ≥ 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]".into());
        }
        if self.dba_iterations == 0 {
            return bad("dba_iterations must be ≥ 1".into());
        }
        self.dtw_params().validate()
    }

    /// Checks the invariants that involve the window length `t`.
    pub fn validate_for(&self, t: usize) -> Result<()> {
        self.validate()?;
        if t < 2 {
            return Err(Error::InvalidConfig(format!("window length must be ≥ 2, got {t}")));
        }
        let ts = self.threshold_for(t);
        if ts == 0 || ts >= t {
            return Err(Error::InvalidConfig(format!(
                "collision threshold must satisfy 1 ≤ t_s < t, got t_s={ts}, t={t}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = LshConfig::default();
        c.validate_for(120).unwrap();
        assert_eq!(c.threshold_for(120), 96);
        assert_eq!(c.threshold_for(2), 1);
        assert_eq!(c.dtw_params().band_frac, 0.05);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: LshConfig = serde_json::from_str(r#"{"num_tables": 2, "rank_metric": "ed"}"#).unwrap();
        assert_eq!(c.num_tables, 2);
        assert_eq!(c.rank_metric, RankMetric::Ed);
        assert_eq!(c.hashes_per_table, 3);
    }

    #[test]
    fn rejects_bad_values() {
        let c = LshConfig { approximation_ratio: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = LshConfig { collision_threshold: Some(10), ..Default::default() };
        assert!(c.validate_for(10).is_err());
        assert!(serde_json::from_str::<LshConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
