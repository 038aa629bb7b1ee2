//! Relevance feedback: table labels and positive samples become a new track
//! weight, and positive samples pull the query toward them via DBA.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::{dba_average, dtw_per_track, DtwParams};
use crate::error::{Error, Result};
use crate::lsh::LshModel;
use crate::window::{normalize_window, Query, QueryProvenance, Window, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleLabel {
    Positive,
    Indecisive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableLabel {
    Important,
    Indecisive,
}

/// Labels collected in one feedback round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelSet {
    pub sample_labels: BTreeMap<usize, SampleLabel>,
    pub table_labels: BTreeMap<usize, TableLabel>,
}

impl LabelSet {
    pub fn is_empty(&self) -> bool {
        self.sample_labels.is_empty() && self.table_labels.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.sample_labels.iter().filter(|(_, l)| **l == SampleLabel::Positive).map(|(w, _)| *w)
    }

    pub fn important_tables(&self) -> impl Iterator<Item = usize> + '_ {
        self.table_labels.iter().filter(|(_, l)| **l == TableLabel::Important).map(|(t, _)| *t)
    }

    pub fn validate(&self, windows: usize, tables: usize) -> Result<()> {
        if let Some(&w) = self.sample_labels.keys().find(|&&w| w >= windows) {
            return Err(Error::IndexOutOfRange { index: w, len: windows });
        }
        if let Some(&t) = self.table_labels.keys().find(|&&t| t >= tables) {
            return Err(Error::IndexOutOfRange { index: t, len: tables });
        }
        Ok(())
    }
}

/// Learned weight of the previous round plus its history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    pub w_prev: Vec<f64>,
    pub alpha: f64,
    pub history: Vec<Vec<f64>>,
}

impl WeightState {
    pub fn new(dims: usize, alpha: f64) -> Self {
        let ones = vec![1.0; dims];
        Self { w_prev: ones.clone(), alpha, history: vec![ones] }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `v` to norm `√d`.
pub fn normalize_to_sqrt_d(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidConfig(format!("cannot normalize weight {v:?}")));
    }
    let scale = (v.len() as f64).sqrt() / norm;
    Ok(v.iter().map(|x| x * scale).collect())
}

/// Squared entries of the atomic vectors of every important table, summed per
/// track and rescaled to norm `√d`.
pub fn classifier_weights(model: &LshModel, labels: &LabelSet) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; model.dims];
    let mut any = false;
    for table in labels.important_tables() {
        let compound =
            model.compounds.get(table).ok_or(Error::IndexOutOfRange { index: table, len: model.num_tables() })?;
        for atomic in &compound.atomics {
            for (s, a) in acc.iter_mut().zip(&atomic.a) {
                *s += a * a;
            }
        }
        any = true;
    }
    if !any {
        return Err(Error::NoPositiveTables);
    }
    normalize_to_sqrt_d(&acc)
}

/// Turns per-track aggregate DTW distances into weights: `z = sums²`,
/// `w* = 1 - z/Σz`, rescaled to norm `√d`.
pub fn weights_from_track_distances(sums: &[f64]) -> Vec<f64> {
    let d = sums.len();
    let z: Vec<f64> = sums.iter().map(|s| s * s).collect();
    let total: f64 = z.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return vec![1.0; d];
    }
    let raw: Vec<f64> = z.iter().map(|z| 1.0 - z / total).collect();
    normalize_to_sqrt_d(&raw).unwrap_or_else(|_| vec![1.0; d])
}

/// Per-track importance from positively labelled samples: tracks that stay close
/// to the query under DTW gain weight.
pub fn sample_weights(query: &Query, positives: &[&Window], params: &DtwParams) -> Result<Vec<f64>> {
    if positives.is_empty() {
        return Err(Error::NoPositiveSamples);
    }
    let mut sums = vec![0.0; query.dims()];
    for p in positives {
        let per_track = dtw_per_track(query.values.view(), p.values.view(), params)?;
        for (s, v) in sums.iter_mut().zip(per_track) {
            *s += v;
        }
    }
    Ok(weights_from_track_distances(&sums))
}

/// `w* = (1 - α) w_prev + α/2 (w_c + w_s)`, rescaled to norm `√d`.
///
/// A missing feedback term hands its `α/2` share to the present one; with
/// neither present the previous weight is returned unchanged.
pub fn combine_weights(state: &WeightState, w_c: Option<&[f64]>, w_s: Option<&[f64]>) -> Vec<f64> {
    let alpha = state.alpha;
    let terms: Vec<&[f64]> = [w_c, w_s].into_iter().flatten().collect();
    if terms.is_empty() {
        return state.w_prev.clone();
    }
    let share = alpha / terms.len() as f64;
    let combined: Vec<f64> = (0..state.w_prev.len())
        .map(|j| (1.0 - alpha) * state.w_prev[j] + terms.iter().map(|t| share * t[j]).sum::<f64>())
        .collect();
    normalize_to_sqrt_d(&combined).unwrap_or_else(|_| state.w_prev.clone())
}

/// DBA over the query and its positive samples, initialized at the query, then re-normalized.
pub fn update_query(query: &Query, positives: &[&Window], iterations: usize, params: &DtwParams) -> Result<Query> {
    if positives.is_empty() {
        return Ok(query.clone());
    }
    let mut seqs = vec![query.values.view()];
    seqs.extend(positives.iter().map(|p| p.values.view()));
    let centroid = dba_average(&seqs, query.values.view(), iterations, params)?;
    Ok(Query { values: normalize_window(centroid.view()), provenance: QueryProvenance::DbaUpdated })
}

/// One complete learning round. Inputs are untouched; the updated model,
/// weight state and query are returned together or not at all.
pub fn train_round(
    model: &LshModel,
    state: &WeightState,
    labels: &LabelSet,
    query: &Query,
    windows: &WindowSet,
) -> Result<(LshModel, WeightState, Query)> {
    labels.validate(windows.len(), model.num_tables())?;
    let params = model.config.dtw_params();
    let positives: Vec<&Window> = labels.positives().map(|w| windows.get(w)).collect::<Result<_>>()?;

    let w_c = match classifier_weights(model, labels) {
        Ok(w) => Some(w),
        Err(Error::NoPositiveTables) => None,
        Err(e) => return Err(e),
    };
    let w_s = if positives.is_empty() { None } else { Some(sample_weights(query, &positives, &params)?) };
    let w_r = combine_weights(state, w_c.as_deref(), w_s.as_deref());
    let new_query = update_query(query, &positives, model.config.dba_iterations, &params)?;

    let mut new_model = model.clone();
    new_model.set_weight_exact(w_r.clone())?;
    new_model.set_query(&new_query)?;
    let mut new_state = state.clone();
    new_state.w_prev = w_r.clone();
    new_state.history.push(w_r);
    Ok((new_model, new_state, new_query))
}
