//! Command-line front end: `build | query | bench | steer | serve | replay`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use steerlsh_core::baselines::{
    aggregate, run_bench, steerability_experiment_with_step, BenchCase, BenchRow, Method, SaxConfig, STEER_STEP,
};
use steerlsh_core::series::load_csv;
use steerlsh_core::synthetic::{corpus, planted, CorpusConfig, PlantedConfig};
use steerlsh_core::window::extract_windows;
use steerlsh_core::{Error, LshConfig, LshModel, MultivariateTimeSeries, RankMetric, Session, SessionDocument};

use crate::api::{router, AppState};
use crate::error::ApiError;
use crate::store::Store;

/// Process exit code when every run succeeded.
pub const EXIT_OK: u8 = 0;
/// Some benchmark cell reported a non-ok status.
pub const EXIT_RUN_FAILED: u8 = 1;
/// The command itself failed; stderr holds the error code.
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "steerlsh", version, about = "Steerable weighted LSH pattern retrieval for multivariate time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the hash model for a dataset and hash every window.
    Build(BuildArgs),
    /// Rank the windows of a dataset against the window starting at `--start`.
    Query(QueryArgs),
    /// Compare LSH against exhaustive baselines; emits one CSV row per method and value.
    Bench(BenchArgs),
    /// Run the fixed-weight steerability experiment; emits JSON.
    Steer(SteerArgs),
    /// Serve the REST API.
    Serve(ServeArgs),
    /// Recompute a stored session document and print every round.
    Replay(ReplayArgs),
}

/// Options shared by every data command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed of the hash model and of every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with `LshConfig` overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Where the series comes from.
#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// CSV path, `synthetic` (piecewise corpus) or `planted` (per-track motifs).
    #[arg(long)]
    pub dataset: String,
    /// CSV files have no header row.
    #[arg(long)]
    pub no_header: bool,
    /// Windows of the generated corpus.
    #[arg(long, default_value_t = 10_000)]
    pub windows: usize,
    /// Tracks of a generated dataset.
    #[arg(long, default_value_t = 3)]
    pub tracks: usize,
    /// Seed of a generated dataset.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 120)]
    pub window_len: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Write the model as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 120)]
    pub window_len: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// First time step of the query window.
    #[arg(long)]
    pub start: usize,
    /// Hits to print.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Dtw,
    Ed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Vary {
    QuerySize,
    DatasetSize,
    Tracks,
}

impl Vary {
    fn as_str(&self) -> &'static str {
        match self {
            Vary::QuerySize => "query-size",
            Vary::DatasetSize => "dataset-size",
            Vary::Tracks => "tracks",
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Queries per cell, drawn at random without replacement.
    #[arg(long, default_value_t = 10)]
    pub queries: usize,
    /// Parameter varied across rows.
    #[arg(long, value_enum)]
    pub vary: Vary,
    /// Values of the varied parameter: window lengths, window counts or track counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    /// Window length when it is not the varied parameter.
    #[arg(long, default_value_t = 120)]
    pub window_len: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Comma-separated subset of lsh-dtw, lsh-ed, dtw-d, ed, sax.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Memory budget of the SAX index in MiB.
    #[arg(long, default_value_t = 2048)]
    pub sax_budget_mb: usize,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the rows as a JSON array.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SteerArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 64)]
    pub window_len: usize,
    /// Query start; defaults to the first planted motif on the boosted track.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub boost: usize,
    #[arg(long, default_value_t = 2)]
    pub suppress: usize,
    /// Weight gain per round.
    #[arg(long, default_value_t = STEER_STEP)]
    pub step: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "STEERLSH_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "STEERLSH_HOST", default_value = "127.0.0.1")]
    pub host: String,
    /// Directory holding uploaded datasets and session documents.
    #[arg(long, env = "STEERLSH_DATA_DIR", default_value = "steerlsh-data")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Session document JSON.
    #[arg(long)]
    pub document: PathBuf,
    /// CSV of the dataset the document refers to.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub no_header: bool,
}

type CliResult<T> = std::result::Result<T, ApiError>;

/// Runs one command; the value is the process exit code.
pub fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Bench(a) => bench(a),
        Command::Steer(a) => steer(a),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
    }
}

pub fn load_config(path: Option<&Path>) -> CliResult<LshConfig> {
    let Some(path) = path else { return Ok(LshConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    let cfg: LshConfig =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads or generates the series. Generated corpora get `windows` stride-1
/// windows of length `window_len`.
fn dataset(args: &DatasetArgs, window_len: usize, tracks: usize, windows: usize) -> CliResult<MultivariateTimeSeries> {
    Ok(match args.dataset.as_str() {
        "synthetic" => corpus(&CorpusConfig {
            num_windows: windows,
            window_len,
            tracks,
            seed: args.data_seed,
            ..CorpusConfig::default()
        })?,
        "planted" => {
            planted(&PlantedConfig { window_len, tracks, seed: args.data_seed, ..PlantedConfig::default() })?.0
        }
        path => load_csv(path, !args.no_header)?,
    })
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ApiError::internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BuildReport {
    pub windows: usize,
    pub tracks: usize,
    pub window_len: usize,
    pub model_fingerprint: String,
    pub preprocessing_s: f64,
}

fn build(a: BuildArgs) -> CliResult<u8> {
    let config = load_config(a.common.config.as_deref())?;
    let series = dataset(&a.data, a.window_len, a.data.tracks, a.data.windows)?;
    let windows = extract_windows(&series, a.window_len, a.stride)?;
    let t0 = Instant::now();
    let model = LshModel::generate(series.dims(), a.window_len, config, a.common.seed)?;
    model.index(&windows)?;
    let preprocessing_s = t0.elapsed().as_secs_f64();
    if let Some(out) = &a.out {
        std::fs::write(out, model.to_json()?).map_err(Error::from)?;
    }
    print_json(&BuildReport {
        windows: windows.len(),
        tracks: series.dims(),
        window_len: a.window_len,
        model_fingerprint: model.fingerprint(),
        preprocessing_s,
    })?;
    Ok(EXIT_OK)
}

fn query(a: QueryArgs) -> CliResult<u8> {
    let mut config = load_config(a.common.config.as_deref())?;
    if let Some(m) = a.metric {
        config.rank_metric = match m {
            MetricArg::Dtw => RankMetric::Dtw,
            MetricArg::Ed => RankMetric::Ed,
        };
    }
    let series = Arc::new(dataset(&a.data, a.window_len, a.data.tracks, a.data.windows)?);
    let mut session = Session::build(a.data.dataset.clone(), series, a.window_len, a.stride, config, a.common.seed)?;
    session.set_query(a.start)?;
    let result = session.run_query()?;
    let mut out = csv::Writer::from_writer(std::io::stdout().lock());
    let io = |e: csv::Error| ApiError::from(Error::Io(std::io::Error::other(e)));
    out.write_record(["rank", "window", "start", "score"]).map_err(io)?;
    for (rank, e) in result.candidates.entries.iter().take(a.top).enumerate() {
        let start = session.windows().windows()[e.window].start;
        out.write_record([(rank + 1).to_string(), e.window.to_string(), start.to_string(), e.score.to_string()])
            .map_err(io)?;
    }
    out.flush().map_err(Error::from)?;
    eprintln!("{} candidates after {} expansions", result.candidates.len(), result.candidates.expansions);
    Ok(EXIT_OK)
}

/// `count` distinct window starts drawn without replacement, ascending.
pub fn draw_query_starts(num_windows: usize, stride: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, num_windows, count.min(num_windows)).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|w| w * stride).collect()
}

fn bench(a: BenchArgs) -> CliResult<u8> {
    let config = load_config(a.common.config.as_deref())?;
    let methods: Vec<Method> = if a.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        a.methods.iter().map(|m| m.parse()).collect::<steerlsh_core::Result<_>>()?
    };
    if a.queries == 0 {
        return Err(Error::InvalidConfig("--queries must be at least 1".into()).into());
    }
    let mut rows: Vec<BenchRow> = Vec::new();
    let base = if a.data.dataset == "synthetic" || a.data.dataset == "planted" {
        None
    } else {
        Some(dataset(&a.data, a.window_len, a.data.tracks, a.data.windows)?)
    };
    for &value in &a.values {
        let (t, tracks, windows) = match a.vary {
            Vary::QuerySize => (value, a.data.tracks, a.data.windows),
            Vary::DatasetSize => (a.window_len, a.data.tracks, value),
            Vary::Tracks => (a.window_len, value, a.data.windows),
        };
        let series = match &base {
            None => dataset(&a.data, t, tracks, windows)?,
            Some(s) => match a.vary {
                Vary::QuerySize => s.clone(),
                Vary::DatasetSize => s.truncate(value + t - 1)?,
                Vary::Tracks => s.select_tracks(&(0..value).collect::<Vec<_>>())?,
            },
        };
        if t == 0 || t > series.len() {
            return Err(Error::WindowTooLarge { t, n: series.len() }.into());
        }
        let num_windows = (series.len() - t) / a.stride + 1;
        let case = BenchCase {
            vary: a.vary.as_str().to_string(),
            value,
            series: &series,
            window_len: t,
            stride: a.stride,
            query_starts: draw_query_starts(num_windows, a.stride, a.queries, a.common.seed),
            config: config.clone(),
            seed: a.common.seed,
            sax: SaxConfig::for_window_len(t),
            sax_budget_bytes: a.sax_budget_mb << 20,
        };
        let runs = run_bench(&case, &methods)?;
        rows.extend(aggregate(&case, &runs));
    }
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(Error::from)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut out = csv::Writer::from_writer(sink);
    for row in &rows {
        out.serialize(row).map_err(|e| ApiError::from(Error::Io(std::io::Error::other(e))))?;
    }
    out.flush().map_err(Error::from)?;
    if let Some(p) = &a.json {
        let text = serde_json::to_string_pretty(&rows).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::write(p, text).map_err(Error::from)?;
    }
    let failed: Vec<&BenchRow> = rows.iter().filter(|r| r.status != "ok").collect();
    for r in &failed {
        eprintln!("{} at {}={}: {}", r.method, r.vary, r.value, r.status);
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_RUN_FAILED })
}

fn steer(a: SteerArgs) -> CliResult<u8> {
    let config = load_config(a.common.config.as_deref())?;
    let tracks = a.data.tracks;
    let (series, start) = if a.data.dataset == "planted" {
        let (series, occurrences) = planted(&PlantedConfig {
            window_len: a.window_len,
            tracks,
            seed: a.data.data_seed,
            ..PlantedConfig::default()
        })?;
        let first = occurrences.iter().find(|o| o.track == a.boost).map(|o| o.start);
        (series, a.start.or(first))
    } else {
        (dataset(&a.data, a.window_len, tracks, a.data.windows)?, a.start)
    };
    let start = start.ok_or_else(|| Error::InvalidConfig("--start is required for this dataset".into()))?;
    let mut session = Session::build(a.data.dataset.clone(), Arc::new(series), a.window_len, 1, config, a.common.seed)?;
    session.set_query(start)?;
    let report = steerability_experiment_with_step(&mut session, a.rounds, a.boost, a.suppress, a.step)?;
    print_json(&report)?;
    Ok(EXIT_OK)
}

fn serve(a: ServeArgs) -> CliResult<u8> {
    let store = Store::open(&a.data_dir)?;
    let app = router(Arc::new(AppState::new(store)));
    let runtime = tokio::runtime::Runtime::new().map_err(Error::from)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await.map_err(Error::from)?;
        log::info!("listening on {}", listener.local_addr().map_err(Error::from)?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(Error::from)?;
        Ok::<_, ApiError>(())
    })?;
    Ok(EXIT_OK)
}

/// One recomputed round of a replayed session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayedNode {
    pub id: usize,
    pub weight: Vec<f64>,
    pub weight_history: Vec<Vec<f64>>,
    pub histogram: Vec<usize>,
    pub scores: Vec<f64>,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub round: u64,
    pub cursor: usize,
    pub nodes: Vec<ReplayedNode>,
}

fn replay(a: ReplayArgs) -> CliResult<u8> {
    let doc = SessionDocument::from_json(&std::fs::read_to_string(&a.document).map_err(Error::from)?)?;
    let series = Arc::new(load_csv(&a.dataset, !a.no_header)?);
    let mut session = Session::replay(series, &doc)?;
    let tree = session.tree().cloned().ok_or(Error::NoQuery)?;
    let mut nodes = Vec::new();
    for node in tree.nodes() {
        let result = session.undo_redo(node.id)?;
        nodes.push(ReplayedNode {
            id: node.id,
            weight: session.model().weight().to_vec(),
            weight_history: session.weight_state().history.clone(),
            histogram: result.histogram.clone(),
            scores: result.scores.clone(),
            digest: result.digest(),
        });
    }
    print_json(&ReplayReport { round: doc.round, cursor: tree.cursor(), nodes })?;
    Ok(EXIT_OK)
}
