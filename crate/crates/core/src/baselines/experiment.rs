use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, top_tenth_len, EvalReport};
use super::sax::{SaxConfig, SaxIndex};
use super::{rank_dtwd, rank_ed, ORACLE_SIZE};
use crate::distance::dtw_per_track;
use crate::error::{Error, Result};
use crate::lsh::{generate_candidates_indexed, score_candidates_indexed, LshConfig, LshModel, RankMetric};
use crate::pipeline::Session;
use crate::series::MultivariateTimeSeries;
use crate::window::{extract_windows, Query};

/// Retrieval methods compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lsh-dtw")]
    LshDtw,
    #[serde(rename = "lsh-ed")]
    LshEd,
    #[serde(rename = "dtw-d")]
    DtwD,
    #[serde(rename = "ed")]
    Ed,
    #[serde(rename = "sax")]
    Sax,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::LshDtw, Method::LshEd, Method::DtwD, Method::Ed, Method::Sax];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::LshDtw => "lsh-dtw",
            Method::LshEd => "lsh-ed",
            Method::DtwD => "dtw-d",
            Method::Ed => "ed",
            Method::Sax => "sax",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// One benchmark cell: a dataset, a window length and a list of query offsets.
#[derive(Debug, Clone)]
pub struct BenchCase<'a> {
    /// Parameter being varied, e.g. `tracks`.
    pub vary: String,
    pub value: usize,
    pub series: &'a MultivariateTimeSeries,
    pub window_len: usize,
    pub stride: usize,
    pub query_starts: Vec<usize>,
    pub config: LshConfig,
    pub seed: u64,
    pub sax: SaxConfig,
    pub sax_budget_bytes: usize,
}

/// Outcome of one method on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRun {
    pub method: Method,
    pub query_start: usize,
    pub report: Option<EvalReport>,
    /// Error code when the run failed.
    pub error: Option<String>,
}

/// Runs every method on every query of the case. Preprocessing is timed once
/// per method and reported on each of its runs; window extraction is shared and
/// not timed. Method failures are recorded, not propagated.
pub fn run_bench(case: &BenchCase<'_>, methods: &[Method]) -> Result<Vec<QueryRun>> {
    let windows = extract_windows(case.series, case.window_len, case.stride)?;
    let n = windows.len();
    let queries = case
        .query_starts
        .iter()
        .map(|&s| Query::from_series(case.series, s, case.window_len))
        .collect::<Result<Vec<_>>>()?;
    let params = case.config.dtw_params();

    let mut oracle_rankings = Vec::with_capacity(queries.len());
    for q in &queries {
        let t0 = Instant::now();
        let ranked = rank_dtwd(&windows, q, &params)?;
        oracle_rankings.push((ranked.into_iter().map(|(w, _)| w).collect::<Vec<_>>(), t0.elapsed().as_secs_f64()));
    }
    let oracle = |i: usize| &oracle_rankings[i].0[..ORACLE_SIZE.min(n)];
    let tenth = top_tenth_len(n);

    let mut runs = Vec::new();
    for &method in methods {
        let record = |runs: &mut Vec<QueryRun>, i: usize, outcome: std::result::Result<EvalReport, &str>| {
            let (report, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(code) => (None, Some(code.to_string())),
            };
            runs.push(QueryRun { method, query_start: case.query_starts[i], report, error });
        };
        match method {
            Method::LshDtw | Method::LshEd => {
                let metric = if method == Method::LshDtw { RankMetric::Dtw } else { RankMetric::Ed };
                let t0 = Instant::now();
                let prepared = LshModel::generate(
                    case.series.dims(),
                    case.window_len,
                    case.config.clone().with_metric(metric),
                    case.seed,
                )
                .and_then(|m| m.index(&windows).map(|ix| (m, ix)));
                let pre = t0.elapsed().as_secs_f64();
                for (i, q) in queries.iter().enumerate() {
                    let outcome = prepared.as_ref().map_err(Error::code).and_then(|(model, index)| {
                        let run = || -> Result<EvalReport> {
                            let t1 = Instant::now();
                            let cands = generate_candidates_indexed(model, q, index)?;
                            let (scored, _) = score_candidates_indexed(model, q, index, cands)?;
                            let qt = t1.elapsed().as_secs_f64();
                            let ranking: Vec<usize> = scored.entries.iter().map(|e| e.window).collect();
                            let mut r = evaluate(method.as_str(), &ranking, &ranking, oracle(i), n)?;
                            r.preprocessing_s = pre;
                            r.querying_s = qt;
                            Ok(r)
                        };
                        run().map_err(|e| e.code())
                    });
                    record(&mut runs, i, outcome);
                }
            }
            Method::DtwD => {
                for (i, (ranking, secs)) in oracle_rankings.iter().enumerate() {
                    let outcome = evaluate(method.as_str(), ranking, &ranking[..tenth], oracle(i), n).map(|mut r| {
                        r.querying_s = *secs;
                        r
                    });
                    let outcome = outcome.map_err(|e| e.code());
                    record(&mut runs, i, outcome);
                }
            }
            Method::Ed => {
                for (i, q) in queries.iter().enumerate() {
                    let t0 = Instant::now();
                    let outcome = rank_ed(&windows, q).and_then(|ranked| {
                        let qt = t0.elapsed().as_secs_f64();
                        let ranking: Vec<usize> = ranked.into_iter().map(|(w, _)| w).collect();
                        let mut r = evaluate(method.as_str(), &ranking, &ranking[..tenth], oracle(i), n)?;
                        r.querying_s = qt;
                        Ok(r)
                    });
                    record(&mut runs, i, outcome.map_err(|e| e.code()));
                }
            }
            Method::Sax => {
                let t0 = Instant::now();
                let index = SaxIndex::build(&windows, case.sax, case.sax_budget_bytes);
                let pre = t0.elapsed().as_secs_f64();
                for (i, q) in queries.iter().enumerate() {
                    let outcome = index.as_ref().map_err(Error::code).and_then(|index| {
                        let run = || -> Result<EvalReport> {
                            let t1 = Instant::now();
                            let ranked = index.rank(q)?;
                            let qt = t1.elapsed().as_secs_f64();
                            let ranking: Vec<usize> = ranked.into_iter().map(|(w, _)| w).collect();
                            let mut r = evaluate(method.as_str(), &ranking, &ranking[..tenth], oracle(i), n)?;
                            r.preprocessing_s = pre;
                            r.querying_s = qt;
                            Ok(r)
                        };
                        run().map_err(|e| e.code())
                    });
                    record(&mut runs, i, outcome);
                }
            }
        }
    }
    Ok(runs)
}

/// One CSV row: a method's averages over the queries of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub vary: String,
    pub value: usize,
    pub windows: usize,
    pub window_len: usize,
    pub tracks: usize,
    pub queries: usize,
    pub preprocessing_s: f64,
    pub querying_s: f64,
    pub combined_s: f64,
    pub recall: f64,
    pub precision_50: f64,
    pub precision_10pct: f64,
    pub threads: usize,
    pub seed: u64,
    /// `ok`, or the error code of the first failed query.
    pub status: String,
}

/// Per-method means over the successful queries; querying time is per query.
pub fn aggregate(case: &BenchCase<'_>, runs: &[QueryRun]) -> Vec<BenchRow> {
    let windows = (case.series.len() - case.window_len) / case.stride + 1;
    let mut methods: Vec<Method> = Vec::new();
    for r in runs {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let mine: Vec<&QueryRun> = runs.iter().filter(|r| r.method == m).collect();
            let ok: Vec<&EvalReport> = mine.iter().filter_map(|r| r.report.as_ref()).collect();
            let mean = |f: &dyn Fn(&EvalReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            let pre = mean(&|r| r.preprocessing_s);
            let qt = mean(&|r| r.querying_s);
            BenchRow {
                method: m.as_str().to_string(),
                vary: case.vary.clone(),
                value: case.value,
                windows,
                window_len: case.window_len,
                tracks: case.series.dims(),
                queries: mine.len(),
                preprocessing_s: pre,
                querying_s: qt,
                combined_s: pre + qt,
                recall: mean(&|r| r.recall.fraction()),
                precision_50: mean(&|r| r.precision_50.fraction()),
                precision_10pct: mean(&|r| r.precision_10pct.fraction()),
                threads: 1,
                seed: case.seed,
                status: mine.iter().find_map(|r| r.error.clone()).unwrap_or_else(|| "ok".to_string()),
            }
        })
        .collect()
}

/// Mean per-track DTW to the query per round under a fixed manual weight schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerReport {
    pub boost: usize,
    pub suppress: usize,
    /// Round 0: all-ones weights.
    pub reference: Vec<f64>,
    /// Rounds `1..=R`, one `d`-vector each.
    pub rounds: Vec<Vec<f64>>,
    /// Installed weights for rounds `0..=R`.
    pub weights: Vec<Vec<f64>>,
}

/// Weight gain per steering round.
pub const STEER_STEP: f64 = 0.15;

/// Round `r` installs `g = 1 + step·r` on `boost`, `1 / g` on `suppress` and 1
/// elsewhere, rescaled to norm `√d`, reruns the query and records the mean
/// per-track DTW between the query and its top-50.
pub fn steerability_experiment(
    session: &mut Session,
    rounds: usize,
    boost: usize,
    suppress: usize,
) -> Result<SteerReport> {
    steerability_experiment_with_step(session, rounds, boost, suppress, STEER_STEP)
}

/// [`steerability_experiment`] with an explicit per-round gain `step > 0`.
pub fn steerability_experiment_with_step(
    session: &mut Session,
    rounds: usize,
    boost: usize,
    suppress: usize,
    step: f64,
) -> Result<SteerReport> {
    let d = session.series().dims();
    if d < 2 || boost == suppress || boost >= d || suppress >= d {
        return Err(Error::InvalidConfig(format!(
            "steering needs two distinct tracks below {d}, got {boost} and {suppress}"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig("steering step must be positive".into()));
    }
    let params = session.model().config.dtw_params();
    let mut rows = Vec::with_capacity(rounds + 1);
    let mut weights = Vec::with_capacity(rounds + 1);
    for r in 0..=rounds {
        let mut w = vec![1.0; d];
        let gain = 1.0 + step * r as f64;
        w[boost] = gain;
        w[suppress] = 1.0 / gain;
        let result = session.set_manual_weight(&w)?;
        weights.push(session.model().weight().to_vec());
        let query = session.query().ok_or(Error::NoQuery)?.values.clone();
        let top: Vec<usize> = result.top_k.iter().take(ORACLE_SIZE).copied().collect();
        let mut mean = vec![0.0; d];
        for &wi in &top {
            let per = dtw_per_track(query.view(), session.windows().get(wi)?.values.view(), &params)?;
            for (m, v) in mean.iter_mut().zip(per) {
                *m += v / top.len() as f64;
            }
        }
        rows.push(mean);
    }
    let reference = rows.remove(0);
    Ok(SteerReport { boost, suppress, reference, rounds: rows, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::l2_norm;
    use crate::synthetic::{corpus, CorpusConfig};
    use std::sync::Arc;

    fn small() -> MultivariateTimeSeries {
        corpus(&CorpusConfig { num_windows: 600, window_len: 30, tracks: 3, noise: 0.05, seed: 2 }).unwrap()
    }

    #[test]
    fn bench_rows_per_method() {
        let s = small();
        let case = BenchCase {
            vary: "tracks".into(),
            value: 3,
            series: &s,
            window_len: 30,
            stride: 1,
            query_starts: vec![10, 300],
            config: LshConfig::default(),
            seed: 1,
            sax: SaxConfig::for_window_len(30),
            sax_budget_bytes: 1 << 30,
        };
        let runs = run_bench(&case, &Method::ALL).unwrap();
        assert_eq!(runs.len(), 10);
        let rows = aggregate(&case, &runs);
        assert_eq!(rows.len(), 5);
        for row in &rows {
            assert_eq!(row.status, "ok");
            assert!((0.0..=1.0).contains(&row.recall));
        }
        let dtwd = rows.iter().find(|r| r.method == "dtw-d").unwrap();
        assert_eq!(dtwd.precision_50, 1.0);
    }

    #[test]
    fn sax_budget_failure_is_recorded() {
        let s = small();
        let case = BenchCase {
            vary: "dataset-size".into(),
            value: 600,
            series: &s,
            window_len: 30,
            stride: 1,
            query_starts: vec![0],
            config: LshConfig::default(),
            seed: 1,
            sax: SaxConfig::for_window_len(30),
            sax_budget_bytes: 10,
        };
        let runs = run_bench(&case, &[Method::Sax]).unwrap();
        assert_eq!(runs[0].error.as_deref(), Some("resource_exhausted"));
        assert_eq!(aggregate(&case, &runs)[0].status, "resource_exhausted");
    }

    #[test]
    fn steering_reports_rounds_and_norms() {
        let mut session = Session::build("s", Arc::new(small()), 30, 1, LshConfig::default(), 4).unwrap();
        session.set_query(200).unwrap();
        let rep = steerability_experiment(&mut session, 4, 0, 2).unwrap();
        assert_eq!(rep.rounds.len(), 4);
        assert!(rep.rounds.iter().all(|r| r.len() == 3));
        assert_eq!(rep.weights.len(), 5);
        assert_eq!(rep.weights[0], vec![1.0; 3]);
        for w in &rep.weights {
            assert!((l2_norm(w) - 3f64.sqrt()).abs() < 1e-9);
        }
        assert!(rep.weights.windows(2).all(|p| p[1][0] > p[0][0] && p[1][2] < p[0][2]));
        assert!(steerability_experiment(&mut session, 1, 1, 1).is_err());
    }
}
