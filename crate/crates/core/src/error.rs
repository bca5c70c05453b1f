use thiserror::Error;

/// Errors raised by the geometric routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeomError {
    #[error("point {point:?} lies outside the domain of chart `{chart}`")]
    Domain { chart: String, point: Vec<f64> },

    #[error("metric of chart `{chart}` is not positive definite at {point:?} (smallest eigenvalue {min_eig:e})")]
    Definiteness {
        chart: String,
        point: Vec<f64>,
        min_eig: f64,
    },

    #[error("expected a unit vector, got norm {norm}")]
    Normalization { norm: f64 },

    #[error("vectors are linearly dependent (|v ^ w| = {wedge:e})")]
    Degenerate { wedge: f64 },

    #[error("parameter `{name}` out of range: {detail}")]
    Parameter { name: &'static str, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Riccati operator ill-defined at t = {t}: {detail}")]
    IllDefined { t: f64, detail: String },

    #[error("lift obstruction at sample {index} (t = {t}): {detail}")]
    LiftObstruction { index: usize, t: f64, detail: String },

    #[error("geodesic left the chart domain at t = {t}")]
    LeftDomain { t: f64 },

    #[error("unknown {kind} `{name}`; known: {}", known.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        known: Vec<String>,
    },

    #[error("no convergence: {0}")]
    NoConvergence(String),
}

impl GeomError {
    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        GeomError::Parameter {
            name,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GeomError>;
