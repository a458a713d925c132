use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unstable resonator: mirror spacing {spacing} m must lie in (0, 2R) with R = {curvature} m")]
    UnstableResonator { spacing: f64, curvature: f64 },

    #[error("photon-number truncation: tail p(n_max) = {tail:e} at n_max = {n_max}")]
    Truncation { n_max: usize, tail: f64 },

    #[error("steady-state null space has dimension {0}, expected 1")]
    DegenerateNullSpace(usize),

    #[error("linear regime violated: Rabi angle {angle} rad exceeds {limit} rad")]
    LinearRegimeViolation { angle: f64, limit: f64 },

    #[error("grid spacing {spacing} m is coarser than {limit} m")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("{count} simultaneous atoms exceed the configured maximum {max}")]
    AtomOverflow { count: usize, max: usize },

    #[error("negative value {value} at index {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("point-spread function sums to {0}, expected 1")]
    PsfNotNormalized(f64),

    #[error("response spectrum vanishes at every frequency carrying signal power")]
    ZeroResponse,

    #[error("scan spans {span} m, less than two periods ({needed} m)")]
    SpanTooShort { span: f64, needed: f64 },

    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("inconsistent axis reconstructions: {0}")]
    InconsistentAxes(String),

    #[error("iso-level {level} exceeds the grid maximum {max}")]
    EmptySurface { level: f64, max: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing traces: {}", .0.join(", "))]
    MissingTraces(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NonFinite(_) => "non_finite",
            Error::UnstableResonator { .. } => "unstable_resonator",
            Error::Truncation { .. } => "truncation",
            Error::DegenerateNullSpace(_) => "degenerate_null_space",
            Error::LinearRegimeViolation { .. } => "linear_regime_violation",
            Error::GridTooCoarse { .. } => "grid_too_coarse",
            Error::AtomOverflow { .. } => "atom_overflow",
            Error::NegativeInput { .. } => "negative_input",
            Error::PsfNotNormalized(_) => "psf_not_normalized",
            Error::ZeroResponse => "zero_response",
            Error::SpanTooShort { .. } => "span_too_short",
            Error::NonConvergence(_) => "non_convergence",
            Error::InconsistentAxes(_) => "inconsistent_axes",
            Error::EmptySurface { .. } => "empty_surface",
            Error::Parse { .. } => "parse",
            Error::MissingTraces(_) => "missing_traces",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_positive(value: f64, what: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} must be positive and finite, got {value}")))
    }
}
