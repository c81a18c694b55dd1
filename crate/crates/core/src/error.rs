use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolitonError {
    #[error("degenerate state at s = {s}: a = {a}, b = {b}")]
    DegenerateState { s: f64, a: f64, b: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integration controls: {0}")]
    InvalidControls(String),

    #[error("series recursion hit a vanishing pivot ({pivot:e}) at level {level}")]
    ResonanceFailure { level: usize, pivot: f64 },

    #[error("invalid cone data: {0}")]
    InvalidCase(String),

    #[error("s = {s} lies outside the series handoff radius {radius}")]
    OutOfRadius { s: f64, radius: f64 },

    #[error("trigger functional has no sign change on [{s0}, {s1}]")]
    NoSignChange { s0: f64, s1: f64 },

    #[error("step budget of {0} steps exhausted")]
    MaxSteps(usize),

    #[error("shooting not applicable: {0}")]
    NotApplicable(String),

    #[error("bracket invalid: {0}")]
    BracketInvalid(String),

    #[error("classification inconclusive at f0 = {f0} up to s = {s_max}")]
    Inconclusive { f0: f64, s_max: f64 },

    #[error("r = {r} outside the oracle domain [{lo}, {hi})")]
    OutOfDomain { r: f64, lo: f64, hi: f64 },

    #[error("trajectory parameters do not match the oracle: {0}")]
    MismatchedParams(String),

    #[error("window [{s_a}, {s_b}] holds {found} samples, need {needed}")]
    WindowTooShort {
        s_a: f64,
        s_b: f64,
        found: usize,
        needed: usize,
    },

    #[error("trajectory is not collapsed")]
    NotCollapsed,

    #[error("dimension {0} is below 3")]
    BadDimension(u32),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for SolitonError {
    fn from(e: std::io::Error) -> Self {
        SolitonError::Io(e.to_string())
    }
}

impl SolitonError {
    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            SolitonError::DegenerateState { .. } => "DegenerateState",
            SolitonError::InvalidParams(_) => "InvalidParams",
            SolitonError::InvalidControls(_) => "InvalidControls",
            SolitonError::ResonanceFailure { .. } => "ResonanceFailure",
            SolitonError::InvalidCase(_) => "InvalidCase",
            SolitonError::OutOfRadius { .. } => "OutOfRadius",
            SolitonError::NoSignChange { .. } => "NoSignChange",
            SolitonError::MaxSteps(_) => "MaxSteps",
            SolitonError::NotApplicable(_) => "NotApplicable",
            SolitonError::BracketInvalid(_) => "BracketInvalid",
            SolitonError::Inconclusive { .. } => "Inconclusive",
            SolitonError::OutOfDomain { .. } => "OutOfDomain",
            SolitonError::MismatchedParams(_) => "MismatchedParams",
            SolitonError::WindowTooShort { .. } => "WindowTooShort",
            SolitonError::NotCollapsed => "NotCollapsed",
            SolitonError::BadDimension(_) => "BadDimension",
            SolitonError::Io(_) => "IoError",
            SolitonError::Parse(_) => "ParseError",
        }
    }
}

pub type Result<T, E = SolitonError> = std::result::Result<T, E>;
