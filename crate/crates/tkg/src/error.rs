use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TkgError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown {kind} `{name}`")]
    UnknownSymbol { kind: &'static str, name: String },
    #[error("id {id} out of range for {kind} vocabulary of size {size}")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },
    #[error("time {time} outside horizon {horizon}")]
    TimeOutOfRange { time: u32, horizon: u32 },
    #[error("interval start {start} after end {end}")]
    InvertedInterval { start: u32, end: u32 },
    #[error("split {train}+{val}+{test} does not match total {total}")]
    InconsistentSplit {
        total: u32,
        train: u32,
        val: u32,
        test: u32,
    },
    #[error("split total {total} does not match graph horizon {horizon}")]
    HorizonMismatch { total: u32, horizon: u32 },
    #[error("ratio {0} out of range")]
    BadRatio(f64),
    #[error("no unaligned target entity available for noise injection")]
    NoUnalignedTargets,
    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),
}

pub type Result<T> = std::result::Result<T, TkgError>;
