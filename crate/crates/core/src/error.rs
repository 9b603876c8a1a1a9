use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum TrlError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("cdf is not strictly increasing near {at}: inverse is not unique")]
    NonInvertibleCdf { at: f64 },

    #[error("invalid map system: {0}")]
    InvalidSystem(String),

    #[error("precision policy violated: {0}")]
    Precision(String),

    #[error("operation unsupported for system `{system}`: {reason}")]
    Unsupported { system: String, reason: String },

    #[error("preimage interval budget exceeded ({count} > {cap})")]
    IntervalBudget { count: usize, cap: usize },

    #[error("invalid twist: {0}")]
    InvalidTwist(String),

    #[error("twist piece {piece} is not monotone: f({x0}) = {y0}, f({x1}) = {y1}")]
    NonMonotone {
        piece: usize,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("no radius reaches mass {mass} from center {center}")]
    UnreachableMass { center: f64, mass: f64 },

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid intersection matrix: {0}")]
    InvalidMatrix(String),

    #[error("method mismatch: {0}")]
    MethodMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<TrlError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TrlError {
    pub fn at_stage(self, stage: &'static str) -> Self {
        TrlError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, TrlError>;
