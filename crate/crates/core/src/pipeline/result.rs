use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::lsh::CandidateSet;
use crate::sampling::{bin_of, histogram, Prototype, HISTOGRAM_BINS};
use crate::window::WindowSet;

/// Score given to windows that did not collide under any table.
pub const NON_CANDIDATE_SCORE: f64 = 1.0;

/// Ranked view of every window for one (model, query) state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// Session round the result belongs to.
    pub round: u64,
    /// Normalized score per window, `[0, 1]`, non-candidates at 1.
    pub scores: Vec<f64>,
    /// Window counts over ten equi-width score bins; bin 0 is the most similar.
    pub histogram: Vec<usize>,
    /// Mean/min/max band over all windows of each bin; `None` for empty bins.
    pub bin_prototypes: Vec<Option<Prototype>>,
    /// Best candidates, best first.
    pub top_k: Vec<usize>,
    pub candidates: CandidateSet,
}

impl RetrievalResult {
    /// Assembles the result from a scored candidate set.
    pub fn assemble(candidates: CandidateSet, windows: &WindowSet, top_k: usize, round: u64) -> Result<Self> {
        let mut scores = vec![NON_CANDIDATE_SCORE; windows.len()];
        for e in &candidates.entries {
            scores[e.window] = e.score;
        }
        let hist = histogram(scores.iter().copied());
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); HISTOGRAM_BINS];
        for (w, &s) in scores.iter().enumerate() {
            members[bin_of(s)].push(w);
        }
        let bin_prototypes = members
            .iter()
            .map(|ws| Prototype::from_windows(ws.iter().map(|&w| windows.windows()[w].values.view())))
            .collect();
        let top_k = candidates.entries.iter().take(top_k).map(|e| e.window).collect();
        Ok(Self { round, scores, histogram: hist, bin_prototypes, top_k, candidates })
    }

    /// Windows of one histogram bin, ascending.
    pub fn bin_members(&self, bin: usize) -> Vec<usize> {
        (0..self.scores.len()).filter(|&w| bin_of(self.scores[w]) == bin).collect()
    }

    /// SHA-256 over scores, histogram, top list and candidates; ignores `round`.
    pub fn digest(&self) -> String {
        let body = serde_json::to_vec(&(&self.scores, &self.histogram, &self.top_k, &self.candidates))
            .expect("result serializes");
        Sha256::digest(&body).iter().map(|b| format!("{b:02x}")).collect()
    }
}
