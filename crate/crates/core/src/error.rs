use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("row {row} has {found} columns, expected {expected}")]
    Format { row: usize, expected: usize, found: usize },

    #[error("cannot parse value at row {row}, column {col}: {value:?}")]
    Parse { row: usize, col: usize, value: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("window length {t} does not fit a series of length {n}")]
    WindowTooLarge { t: usize, n: usize },

    #[error("unknown track {track} (series has {d} tracks)")]
    UnknownTrack { track: usize, d: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no candidates after {expansions} radius expansions; widen omega or pick another query")]
    EmptyCandidates { expansions: usize },

    #[error("no hash table labelled as important")]
    NoPositiveTables,

    #[error("no positively labelled samples")]
    NoPositiveSamples,

    #[error("empty input")]
    EmptyInput,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no query has been set")]
    NoQuery,

    #[error("unknown exploration tree node {0}")]
    UnknownNode(usize),

    #[error("resource budget exceeded: need {needed} bytes, budget {budget}")]
    ResourceExhausted { needed: usize, budget: usize },

    #[error("session document error: {0}")]
    Document(String),
}

impl Error {
    /// Stable machine-readable code, used by the service and the CLI exit path.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io_error",
            Error::Format { .. } => "format_error",
            Error::Parse { .. } => "parse_error",
            Error::EmptyDataset => "empty_dataset",
            Error::InvalidSeries(_) => "invalid_series",
            Error::WindowTooLarge { .. } => "window_too_large",
            Error::UnknownTrack { .. } => "unknown_track",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Shape(_) => "shape_error",
            Error::EmptyCandidates { .. } => "empty_candidates",
            Error::NoPositiveTables => "no_positive_tables",
            Error::NoPositiveSamples => "no_positive_samples",
            Error::EmptyInput => "empty_input",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NoQuery => "no_query",
            Error::UnknownNode(_) => "unknown_node",
            Error::ResourceExhausted { .. } => "resource_exhausted",
            Error::Document(_) => "document_error",
        }
    }
}
