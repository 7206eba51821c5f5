use std::path::PathBuf;

use crate::direction::SignLedger;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid slice {slice}: {reason}")]
    InvalidSlice { slice: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short for filter: {frames} frames cannot carry a {taps}-tap kernel, reduce the filter order or raise the cutoff")]
    SignalTooShort { frames: usize, taps: usize },

    #[error("slice {slice}: no temporal variation")]
    NoTemporalVariation { slice: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("eigensolver did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("zero-variance input to correlation")]
    ZeroVariance,

    #[error("degenerate adjacent-slice correlation: r({0},{1}) is exactly zero")]
    DegenerateCorrelation(usize, usize),

    #[error("frame {frame}: projection total is not positive")]
    EmptyProjection { frame: usize },

    #[error("directionality undetermined: consensus score is {}", .ledger.consensus_score)]
    DirectionalityUndetermined { ledger: Box<SignLedger> },

    #[error("signal for slice {slice} is in state {state:?}, expected {expected:?}")]
    WrongSignState {
        slice: usize,
        state: crate::stack::SignState,
        expected: crate::stack::SignState,
    },

    #[error("insufficient triggers: need at least 2 R-waves, got {0}")]
    InsufficientTriggers(usize),

    #[error("no sinus beats: all {0} heartbeats rejected as arrhythmic")]
    NoSinusBeats(usize),

    #[error("missing pixel file, slice {slice} ({path})")]
    MissingPixelFile { slice: usize, path: PathBuf },

    #[error("truncated pixel file, slice {slice}: expected {expected} bytes, found {found}")]
    TruncatedPixelFile {
        slice: usize,
        expected: usize,
        found: usize,
    },

    #[error("slice {slice}, frame {frame}: non-finite or negative intensity")]
    BadIntensity { slice: usize, frame: usize },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("slice {slice}: {source}")]
    InSlice {
        slice: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_slice(self, slice: usize) -> Self {
        match self {
            e @ (Error::InSlice { .. } | Error::InvalidSlice { .. }) => e,
            e => Error::InSlice {
                slice,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, looking through slice annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::InSlice { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_undetermined(&self) -> bool {
        matches!(self.root(), Error::DirectionalityUndetermined { .. })
    }
}
