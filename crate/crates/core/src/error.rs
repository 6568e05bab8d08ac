use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate parameters: no positive draw after {0} attempts")]
    DegenerateDraw(usize),

    #[error("silhouette does not fit the frame: needs {needed_w}x{needed_h} px, image is {width}x{height}")]
    OutOfFrame {
        needed_w: usize,
        needed_h: usize,
        width: usize,
        height: usize,
    },

    #[error("image buffer has {got} pixels, expected {expected}")]
    PixelCountMismatch { expected: usize, got: usize },

    #[error("degenerate histogram: every pixel has intensity {0}")]
    DegenerateHistogram(u8),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("class {class} has {count} samples, at least {min} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        min: usize,
    },

    #[error("singular design matrix (rank {rank} < {cols})")]
    Singular { rank: usize, cols: usize },

    #[error("correlation undefined: zero variance")]
    ZeroVariance,

    #[error("too many rules: {rules} exceeds cap {cap}")]
    RuleExplosion { rules: usize, cap: usize },

    #[error("{clusters} clusters requested for {points} points")]
    TooManyClusters { clusters: usize, points: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value during training at epoch {epoch}: {what}")]
    NonFinite { epoch: usize, what: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("pgm: {0}")]
    Pgm(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
