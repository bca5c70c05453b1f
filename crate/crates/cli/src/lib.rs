//! Scenario runner behind the `riclab` command-line tool.

pub mod config;
pub mod expr;
pub mod output;
pub mod run;

use riclab::GeomError;

/// Exit status when every check passed.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;

/// Errors that stop a scenario (or the whole run), each with its own exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// A chart or patch name missing from the registry (exit 3).
    UnknownName(String),
    /// A parameter out of range or a violated precondition (exit 4).
    Parameter(String),
    /// A point or geodesic left the chart domain (exit 5).
    Domain(String),
    /// A numerical method did not converge (exit 6).
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::UnknownName(_) => 3,
            Failure::Parameter(_) => 4,
            Failure::Domain(_) => 5,
            Failure::Numerical(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::UnknownName(_) => "unknown_name",
            Failure::Parameter(_) => "invalid_parameter",
            Failure::Domain(_) => "domain",
            Failure::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::UnknownName(m) | Failure::Parameter(m) | Failure::Domain(m) | Failure::Numerical(m) => m,
        }
    }

    /// Prefix the message with `what`.
    pub fn context(self, what: &str) -> Self {
        let wrap = |m: String| format!("{what}: {m}");
        match self {
            Failure::Config(m) => Failure::Config(wrap(m)),
            Failure::UnknownName(m) => Failure::UnknownName(wrap(m)),
            Failure::Parameter(m) => Failure::Parameter(wrap(m)),
            Failure::Domain(m) => Failure::Domain(wrap(m)),
            Failure::Numerical(m) => Failure::Numerical(wrap(m)),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind().replace('_', " "), self.message())
    }
}

impl std::error::Error for Failure {}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Self {
        let msg = e.to_string();
        match e {
            GeomError::UnknownName { kind, name, known } => {
                let hint = known.iter().take(3).map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ");
                Failure::UnknownName(format!("unknown {kind} `{name}`; did you mean {hint}?"))
            }
            GeomError::Parameter { .. } | GeomError::Normalization { .. } | GeomError::Degenerate { .. } | GeomError::Precondition(_) => {
                Failure::Parameter(msg)
            }
            GeomError::Domain { .. } | GeomError::LeftDomain { .. } | GeomError::Definiteness { .. } => Failure::Domain(msg),
            GeomError::IllDefined { .. } | GeomError::LiftObstruction { .. } | GeomError::NoConvergence(_) => Failure::Numerical(msg),
        }
    }
}
