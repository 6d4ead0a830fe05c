use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window setting (level {level}, width {width}): width must be > 0 and level finite")]
    InvalidSetting { level: f64, width: f64 },

    #[error("invalid display range (u {u}, eps {eps}): need u > 0 and 0 < eps < u/2")]
    InvalidDisplayRange { u: f64, eps: f64 },

    #[error("non-finite HU value {0}")]
    NonFiniteInput(f64),

    #[error("unknown preset '{0}' (valid presets: brain, subdural, bone, abdomen)")]
    UnknownPreset(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("window degenerated during training (channel {channel}: w = {w})")]
    DegenerateWindow { channel: usize, w: f64 },

    #[error("forward tape is stale: parameters changed since the forward pass")]
    StaleTape,

    #[error("non-finite gradient in parameter group '{0}'")]
    NonFiniteGradient(String),

    #[error("epoch {epoch} out of range (epochs = {epochs})")]
    EpochOutOfRange { epoch: usize, epochs: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("invalid phantom spec: {0}")]
    InvalidPhantomSpec(String),

    #[error("invalid dataset request: {0}")]
    InvalidDataset(String),

    #[error("cannot split {cases} cases into three non-empty subsets with fractions {fractions:?}")]
    TooFewCases { cases: usize, fractions: [f64; 3] },

    #[error("AUC undefined: scores need at least one positive and one negative label")]
    AucUndefined,

    #[error("AP undefined: no positive labels")]
    ApUndefined,

    #[error("score/label length mismatch ({scores} scores, {labels} labels)")]
    LengthMismatch { scores: usize, labels: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("unknown variant '{0}'")]
    UnknownVariant(String),

    #[error("model has no WSO layer")]
    NoWsoLayer,

    #[error("bad magic in {what}: expected {expected:?}")]
    BadMagic { what: &'static str, expected: &'static str },

    #[error("unsupported {what} version {version}")]
    UnsupportedVersion { what: &'static str, version: u16 },

    #[error("truncated {what}: {detail}")]
    Truncated { what: &'static str, detail: String },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("HU value {hu} is not representable as slope*int16 + intercept (slope {slope}, intercept {intercept})")]
    NotRepresentable { hu: f64, slope: f64, intercept: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Whether the error came from the filesystem or a malformed file on disk.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Truncated { .. }
                | Error::Malformed { .. }
        )
    }
}
