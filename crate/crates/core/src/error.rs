use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("image has no foreground pixels")]
    NoForeground,

    #[error("tile grid {rows}x{cols} does not fit a {width}x{height} image")]
    TileTooLarge {
        rows: usize,
        cols: usize,
        width: usize,
        height: usize,
    },

    #[error("patch size {patch} exceeds image {width}x{height}")]
    PatchTooLarge {
        patch: usize,
        width: usize,
        height: usize,
    },

    #[error("importance map is constant; cannot threshold")]
    DegenerateImportance,

    #[error("surrogate system is singular")]
    SingularFit,

    #[error("predictor error: {0}")]
    Predictor(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("image codec error: {0}")]
    Codec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Errors raised by or while talking to a predictor.
    pub fn is_predictor(&self) -> bool {
        matches!(
            self,
            Error::Predictor(_) | Error::Transport(_) | Error::Protocol(_)
        )
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::NoForeground | Error::DegenerateImportance | Error::SingularFit
        )
    }
}
