use std::path::PathBuf;

use crate::scene::Eye;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown disc id {0}")]
    UnknownDisc(u32),
    #[error("disc {id} is already hidden from the {hidden:?} eye")]
    AlreadyMonocular { id: u32, hidden: Eye },
    #[error("invalid stimulus: {0}")]
    InvalidStimulus(String),
    #[error("set size {0} is out of range")]
    SetSize(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("trial index {index} out of range (plan has {len} trials)")]
    TrialIndex { index: usize, len: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("disc {id} falls outside the {width}x{height} raster")]
    OutOfBounds { id: u32, width: u32, height: u32 },
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("event timestamp {now} ms precedes previous event at {last} ms")]
    NonMonotonic { now: f64, last: f64 },
    #[error("session is already done")]
    SessionDone,
    #[error("invalid observer: {0}")]
    InvalidObserver(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("invalid questionnaire field `{field}`: {reason}")]
    Questionnaire { field: String, reason: String },
    #[error("schema error in {source_name} at `{path}`: {message}")]
    Schema {
        source_name: String,
        path: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("png: {0}")]
    Png(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
