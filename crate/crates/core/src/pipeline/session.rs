use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::result::RetrievalResult;
use super::tree::{ExplorationTree, TreeNode};
use crate::error::{Error, Result};
use crate::feedback::{train_round, LabelSet, WeightState};
use crate::lsh::{generate_candidates_indexed, score_candidates_indexed, HashIndex, LshConfig, LshModel};
use crate::sampling::{exploit_samples, explore_samples, table_summaries, SamplePlan, TableSummary, WindowGrid};
use crate::series::MultivariateTimeSeries;
use crate::window::{extract_windows, Query, WindowSet};

pub const SESSION_FORMAT_VERSION: u32 = 1;

/// Windows proposed for labelling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub exploit: Vec<usize>,
    pub explore: Vec<usize>,
}

/// One interactive retrieval session over one dataset.
///
/// Cloning is cheap: the series, windows and hash index are shared.
#[derive(Debug, Clone)]
pub struct Session {
    dataset_id: String,
    series: Arc<MultivariateTimeSeries>,
    windows: Arc<WindowSet>,
    index: Arc<HashIndex>,
    model: LshModel,
    weight_state: WeightState,
    query: Option<Query>,
    query_start: Option<usize>,
    labels_by_round: Vec<LabelSet>,
    results: Option<Arc<RetrievalResult>>,
    tree: Option<ExplorationTree>,
    round: u64,
}

/// Versioned persistent form of a session. The series is referenced by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub format_version: u32,
    pub dataset_id: String,
    pub window_len: usize,
    pub stride: usize,
    pub seed: u64,
    pub config: LshConfig,
    pub model_fingerprint: String,
    pub query_start: Option<usize>,
    pub round: u64,
    pub tree: Option<ExplorationTree>,
}

impl SessionDocument {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(json).map_err(|e| Error::Document(e.to_string()))?;
        if doc.format_version != SESSION_FORMAT_VERSION {
            return Err(Error::Document(format!("unsupported session format {}", doc.format_version)));
        }
        if let Some(tree) = &doc.tree {
            tree.validate()?;
        }
        Ok(doc)
    }
}

impl Session {
    /// Extracts the windows, generates the model and hashes every window. No query yet.
    pub fn build(
        dataset_id: impl Into<String>,
        series: Arc<MultivariateTimeSeries>,
        window_len: usize,
        stride: usize,
        config: LshConfig,
        seed: u64,
    ) -> Result<Self> {
        let windows = extract_windows(&series, window_len, stride)?;
        let model = LshModel::generate(series.dims(), window_len, config, seed)?;
        let index = model.index(&windows)?;
        let weight_state = WeightState::new(series.dims(), model.config.learning_rate);
        Ok(Self {
            dataset_id: dataset_id.into(),
            series,
            windows: Arc::new(windows),
            index: Arc::new(index),
            model,
            weight_state,
            query: None,
            query_start: None,
            labels_by_round: Vec::new(),
            results: None,
            tree: None,
            round: 0,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn series(&self) -> &MultivariateTimeSeries {
        &self.series
    }

    pub fn windows(&self) -> &WindowSet {
        &self.windows
    }

    pub fn model(&self) -> &LshModel {
        &self.model
    }

    pub fn weight_state(&self) -> &WeightState {
        &self.weight_state
    }

    pub fn query(&self) -> Option<&Query> {
        self.query.as_ref()
    }

    pub fn query_start(&self) -> Option<usize> {
        self.query_start
    }

    pub fn labels_by_round(&self) -> &[LabelSet] {
        &self.labels_by_round
    }

    pub fn tree(&self) -> Option<&ExplorationTree> {
        self.tree.as_ref()
    }

    /// Increases on every change of query, weight or tree cursor.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Latest result, `None` when stale or never computed.
    pub fn results(&self) -> Option<&Arc<RetrievalResult>> {
        self.results.as_ref()
    }

    fn require_query(&self) -> Result<&Query> {
        self.query.as_ref().ok_or(Error::NoQuery)
    }

    fn install_weight(&mut self, weight: Vec<f64>) -> Result<()> {
        self.model.set_weight_exact(weight)?;
        if self.index.weight() != self.model.weight() {
            self.index = Arc::new(self.model.index(&self.windows)?);
        }
        Ok(())
    }

    /// Sets the query to the normalized slice at `start` and starts a new
    /// exploration tree from all-ones weights. Results become stale.
    pub fn set_query(&mut self, start: usize) -> Result<()> {
        let query = Query::from_series(&self.series, start, self.windows.window_len())?;
        let mut next = self.clone();
        next.install_weight(vec![1.0; self.series.dims()])?;
        next.model.set_query(&query)?;
        next.weight_state = WeightState::new(self.series.dims(), self.model.config.learning_rate);
        next.query = Some(query);
        next.query_start = Some(start);
        next.labels_by_round.clear();
        next.results = None;
        next.tree = None;
        next.round += 1;
        *self = next;
        Ok(())
    }

    /// Candidates, ranking, histogram and bin prototypes for the current state.
    /// The first call after `set_query` also creates the tree root.
    pub fn run_query(&mut self) -> Result<Arc<RetrievalResult>> {
        if let Some(r) = &self.results {
            return Ok(r.clone());
        }
        let result = Arc::new(self.compute_result()?);
        if self.tree.is_none() {
            self.tree = Some(ExplorationTree::new(self.snapshot(LabelSet::default(), &result)?));
        }
        self.results = Some(result.clone());
        Ok(result)
    }

    fn compute_result(&self) -> Result<RetrievalResult> {
        let query = self.require_query()?;
        let candidates = generate_candidates_indexed(&self.model, query, &self.index)?;
        let (scored, _) = score_candidates_indexed(&self.model, query, &self.index, candidates)?;
        RetrievalResult::assemble(scored, &self.windows, self.model.config.top_k, self.round)
    }

    fn snapshot(&self, labels: LabelSet, result: &RetrievalResult) -> Result<TreeNode> {
        Ok(TreeNode {
            id: 0,
            parent: None,
            children: Vec::new(),
            labels,
            weight: self.model.weight().to_vec(),
            weight_history: self.weight_state.history.clone(),
            query: self.require_query()?.clone(),
            result_digest: result.digest(),
        })
    }

    /// One learning round followed by a fresh query; records a child of the
    /// cursor node. On error the session is unchanged.
    pub fn feedback_round(&mut self, labels: LabelSet) -> Result<Arc<RetrievalResult>> {
        self.run_query()?;
        let query = self.require_query()?;
        let (model, state, new_query) = train_round(&self.model, &self.weight_state, &labels, query, &self.windows)?;
        let mut next = self.clone();
        next.install_weight(model.weight().to_vec())?;
        next.model.set_query(&new_query)?;
        next.weight_state = state;
        next.query = Some(new_query);
        next.labels_by_round.push(labels.clone());
        next.round += 1;
        let result = Arc::new(next.compute_result()?);
        let node = next.snapshot(labels, &result)?;
        next.tree.as_mut().ok_or(Error::NoQuery)?.push_child(node);
        next.results = Some(result.clone());
        *self = next;
        Ok(result)
    }

    /// Restores the weight, query and labels recorded at `node` and reruns the query.
    pub fn undo_redo(&mut self, node: usize) -> Result<Arc<RetrievalResult>> {
        let tree = self.tree.as_ref().ok_or(Error::NoQuery)?;
        let target = tree.get(node)?.clone();
        let labels = tree
            .path(node)?
            .into_iter()
            .skip(1)
            .map(|id| tree.get(id).map(|n| n.labels.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut next = self.clone();
        next.install_weight(target.weight.clone())?;
        next.model.set_query(&target.query)?;
        next.weight_state = WeightState {
            w_prev: target.weight.clone(),
            alpha: self.model.config.learning_rate,
            history: target.weight_history.clone(),
        };
        next.query = Some(target.query.clone());
        next.labels_by_round = labels;
        next.round += 1;
        next.tree.as_mut().ok_or(Error::NoQuery)?.set_cursor(node)?;
        let result = Arc::new(next.compute_result()?);
        next.results = Some(result.clone());
        *self = next;
        Ok(result)
    }

    /// Installs a fixed weight vector (rescaled to `√d`) without learning and
    /// reruns the query. The exploration tree is left as is.
    pub fn set_manual_weight(&mut self, weight: &[f64]) -> Result<Arc<RetrievalResult>> {
        self.require_query()?;
        let mut probe = self.model.clone();
        probe.set_weight(weight)?;
        let mut next = self.clone();
        next.install_weight(probe.weight().to_vec())?;
        next.weight_state.w_prev = next.model.weight().to_vec();
        next.weight_state.history.push(next.weight_state.w_prev.clone());
        next.round += 1;
        let result = Arc::new(next.compute_result()?);
        next.results = Some(result.clone());
        *self = next;
        Ok(result)
    }

    /// Per-table score histograms and top-20 prototypes of the current result.
    pub fn tables(&mut self) -> Result<Vec<TableSummary>> {
        let result = self.run_query()?;
        table_summaries(&result.candidates, &self.windows)
    }

    /// Per-table best windows plus random exploration draws; labelled windows are excluded.
    pub fn samples(&mut self, k_top: usize, n_explore: usize, seed: u64) -> Result<SampleSet> {
        let result = self.run_query()?;
        let exclude = self.labels_by_round.iter().flat_map(|l| l.sample_labels.keys().copied()).collect();
        let plan = SamplePlan::new(k_top, n_explore, exclude, seed)?;
        let rankings: Vec<Vec<(usize, f64)>> =
            (0..result.candidates.num_tables).map(|t| result.candidates.table_ranking(t)).collect();
        let exploit = exploit_samples(&rankings, WindowGrid::of(&self.windows), &plan);
        let explore = explore_samples(self.windows.len(), &exploit, &plan);
        Ok(SampleSet { exploit, explore })
    }

    pub fn to_document(&self) -> SessionDocument {
        SessionDocument {
            format_version: SESSION_FORMAT_VERSION,
            dataset_id: self.dataset_id.clone(),
            window_len: self.windows.window_len(),
            stride: self.windows.stride(),
            seed: self.model.seed,
            config: self.model.config.clone(),
            model_fingerprint: LshModel::generate(
                self.model.dims,
                self.model.window_len,
                self.model.config.clone(),
                self.model.seed,
            )
            .map(|m| m.fingerprint())
            .unwrap_or_default(),
            query_start: self.query_start,
            round: self.round,
            tree: self.tree.clone(),
        }
    }

    fn from_document_base(series: Arc<MultivariateTimeSeries>, doc: &SessionDocument) -> Result<Self> {
        let session =
            Self::build(doc.dataset_id.clone(), series, doc.window_len, doc.stride, doc.config.clone(), doc.seed)?;
        if session.model.fingerprint() != doc.model_fingerprint {
            return Err(Error::Document("model fingerprint does not match the seed and config".into()));
        }
        Ok(session)
    }

    /// Reinstates the stored snapshots directly: same cursor, weights, query and round.
    pub fn restore(series: Arc<MultivariateTimeSeries>, doc: &SessionDocument) -> Result<Self> {
        let mut s = Self::from_document_base(series, doc)?;
        if let Some(start) = doc.query_start {
            s.set_query(start)?;
            if let Some(tree) = &doc.tree {
                s.tree = Some(tree.clone());
                s.undo_redo(tree.cursor())?;
            }
        }
        s.round = doc.round;
        if let Some(r) = s.results.as_mut() {
            Arc::make_mut(r).round = doc.round;
        }
        Ok(s)
    }

    /// Recomputes every recorded round from its parent and labels, failing if
    /// any weight, query or result differs from the recording.
    pub fn replay(series: Arc<MultivariateTimeSeries>, doc: &SessionDocument) -> Result<Self> {
        let mut s = Self::from_document_base(series, doc)?;
        let (Some(start), Some(recorded)) = (doc.query_start, &doc.tree) else {
            s.round = doc.round;
            return Ok(s);
        };
        s.set_query(start)?;
        let root = s.run_query()?;
        let check = |id: usize, got: &TreeNode, digest: &str| -> Result<()> {
            let want = recorded.get(id)?;
            if got.weight != want.weight
                || got.weight_history != want.weight_history
                || got.query != want.query
                || digest != want.result_digest
            {
                return Err(Error::Document(format!("replay diverged at node {id}")));
            }
            Ok(())
        };
        let live = |s: &Session| s.tree.as_ref().expect("tree exists after run_query").current().clone();
        check(0, &live(&s), &root.digest())?;
        for node in recorded.nodes().iter().skip(1) {
            let parent = node.parent.ok_or_else(|| Error::Document("orphan node".into()))?;
            s.undo_redo(parent)?;
            let result = s.feedback_round(node.labels.clone())?;
            let got = live(&s);
            if got.id != node.id {
                return Err(Error::Document(format!("replay produced node {} for {}", got.id, node.id)));
            }
            check(node.id, &got, &result.digest())?;
        }
        s.undo_redo(recorded.cursor())?;
        s.round = doc.round;
        if let Some(r) = s.results.as_mut() {
            Arc::make_mut(r).round = doc.round;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{SampleLabel, TableLabel};
    use crate::synthetic::{corpus, CorpusConfig};

    fn series() -> Arc<MultivariateTimeSeries> {
        Arc::new(corpus(&CorpusConfig { num_windows: 2000, window_len: 40, tracks: 3, noise: 0.05, seed: 3 }).unwrap())
    }

    fn session() -> Session {
        Session::build("ds", series(), 40, 1, LshConfig::default(), 11).unwrap()
    }

    fn labels(result: &RetrievalResult) -> LabelSet {
        LabelSet {
            sample_labels: [
                (result.top_k[1], SampleLabel::Positive),
                (result.top_k[3], SampleLabel::Positive),
                (result.top_k[8], SampleLabel::Negative),
            ]
            .into(),
            table_labels: [(1, TableLabel::Important)].into(),
        }
    }

    #[test]
    fn build_counts_windows_and_is_deterministic() {
        let s = Arc::new(
            corpus(&CorpusConfig { num_windows: 901, window_len: 100, tracks: 2, noise: 0.1, seed: 1 }).unwrap(),
        );
        assert_eq!(s.len(), 1000);
        let a = Session::build("a", s.clone(), 100, 1, LshConfig::default(), 5).unwrap();
        let b = Session::build("a", s, 100, 1, LshConfig::default(), 5).unwrap();
        assert_eq!(a.windows().len(), 901);
        assert_eq!(a.model().fingerprint(), b.model().fingerprint());
    }

    #[test]
    fn set_query_bounds() {
        let mut s = session();
        let n = s.series().len();
        s.set_query(n - 40).unwrap();
        assert_eq!(s.query().unwrap().values, s.windows().windows()[n - 40].values);
        assert!(matches!(s.set_query(n - 39), Err(Error::WindowTooLarge { .. })));
        assert!(matches!(session().run_query(), Err(Error::NoQuery)));
    }

    #[test]
    fn self_query_lands_in_bin_zero() {
        let mut s = session();
        s.set_query(700).unwrap();
        let r = s.run_query().unwrap();
        assert_eq!(r.top_k[0], 700);
        assert_eq!(r.scores[700], 0.0);
        assert!(r.bin_members(0).contains(&700));
        assert_eq!(r.histogram.iter().sum::<usize>(), s.windows().len());
        for p in r.bin_prototypes.iter().flatten() {
            for ((m, lo), hi) in p.mean.iter().zip(&p.min).zip(&p.max) {
                assert!(lo <= m && m <= hi);
            }
        }
        assert!(r.top_k.iter().all(|&w| r.candidates.contains(w)));
    }

    #[test]
    fn empty_feedback_keeps_ranking() {
        let mut s = session();
        s.set_query(100).unwrap();
        let before = s.run_query().unwrap();
        let after = s.feedback_round(LabelSet::default()).unwrap();
        assert_eq!(before.top_k, after.top_k);
        assert_eq!(before.scores, after.scores);
        assert_eq!(after.round, before.round + 1);
        assert_eq!(s.weight_state().history.len(), 2);
    }

    #[test]
    fn tree_depth_fork_and_undo() {
        let mut s = session();
        s.set_query(1200).unwrap();
        let r0 = s.run_query().unwrap();
        let r1 = s.feedback_round(labels(&r0)).unwrap();
        assert_eq!(s.tree().unwrap().depth(s.tree().unwrap().cursor()).unwrap(), 1);
        let leaf = s.tree().unwrap().cursor();

        let back = s.undo_redo(0).unwrap();
        assert_eq!(s.model().weight(), &[1.0, 1.0, 1.0]);
        assert_eq!(back.scores, r0.scores);
        assert_eq!(s.query().unwrap().values, s.windows().windows()[1200].values);

        s.feedback_round(LabelSet { table_labels: [(0, TableLabel::Important)].into(), ..Default::default() }).unwrap();
        assert_eq!(s.tree().unwrap().get(0).unwrap().children.len(), 2);

        let again = s.undo_redo(leaf).unwrap();
        assert_eq!(again.scores, r1.scores);
        assert_eq!(again.digest(), r1.digest());
        assert!(matches!(s.undo_redo(42), Err(Error::UnknownNode(42))));
    }

    #[test]
    fn failed_round_leaves_session_untouched() {
        let mut s = session();
        s.set_query(10).unwrap();
        s.run_query().unwrap();
        let before = s.to_document();
        let bad = LabelSet { sample_labels: [(usize::MAX, SampleLabel::Positive)].into(), ..Default::default() };
        assert!(s.feedback_round(bad).is_err());
        assert_eq!(s.to_document(), before);
    }

    #[test]
    fn samples_exclude_labelled_windows() {
        let mut s = session();
        s.set_query(500).unwrap();
        let r0 = s.run_query().unwrap();
        let l = labels(&r0);
        s.feedback_round(l.clone()).unwrap();
        let picks = s.samples(3, 15, 9).unwrap();
        for w in picks.exploit.iter().chain(&picks.explore) {
            assert!(!l.sample_labels.contains_key(w));
        }
        assert_eq!(picks.explore.len(), 15);
        assert_eq!(s.tables().unwrap().len(), 5);
    }

    #[test]
    fn document_restore_and_replay() {
        let data = series();
        let mut s = Session::build("ds", data.clone(), 40, 1, LshConfig::default(), 11).unwrap();
        s.set_query(333).unwrap();
        let mut r = s.run_query().unwrap();
        for _ in 0..3 {
            r = s.feedback_round(labels(&r)).unwrap();
        }
        s.undo_redo(1).unwrap();
        let forked = s.feedback_round(LabelSet::default()).unwrap();
        let doc = SessionDocument::from_json(&s.to_document().to_json().unwrap()).unwrap();
        assert_eq!(doc, s.to_document());

        let restored = Session::restore(data.clone(), &doc).unwrap();
        assert_eq!(restored.results().unwrap().as_ref(), forked.as_ref());
        let replayed = Session::replay(data.clone(), &doc).unwrap();
        assert_eq!(replayed.results().unwrap().as_ref(), forked.as_ref());
        assert_eq!(replayed.weight_state(), s.weight_state());
        assert_eq!(replayed.tree(), s.tree());

        let mut tampered = doc.clone();
        let mut tree_json = serde_json::to_value(tampered.tree.as_ref().unwrap()).unwrap();
        tree_json["nodes"][2]["weight"][0] = serde_json::json!(0.5);
        tampered.tree = Some(serde_json::from_value(tree_json).unwrap());
        assert!(matches!(Session::replay(data, &tampered), Err(Error::Document(_))));
    }
}
