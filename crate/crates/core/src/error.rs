use std::path::PathBuf;

/// Errors produced while building, packing, or analyzing traffic traces.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing or out of range.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested node distribution cannot be realised on this topology.
    #[error("infeasible node distribution: {0}")]
    Infeasible(String),

    /// Stage one could not match the target distributions.
    #[error(
        "shaping failed after {attempts} attempts: best JSD {best_jsd:.6} exceeds threshold {threshold}"
    )]
    ShapingFailure {
        attempts: usize,
        best_jsd: f64,
        threshold: f64,
    },

    /// Every pair is masked out.
    #[error("no unmasked pair to select from")]
    NoFeasiblePair,

    /// A packer could not place a flow without exceeding a port capacity.
    #[error("packing infeasible: flow {flow} of size {size} fits no source-destination pair")]
    PackingInfeasible { flow: usize, size: u64 },

    /// Internal ledger corruption: a pair was charged beyond its remaining capacity.
    #[error("capacity violation on pair {pair}: requested {requested}, remaining {remaining}")]
    CapacityViolation {
        pair: usize,
        requested: u64,
        remaining: u64,
    },

    /// Malformed input file.
    #[error("{}:{line}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Attach a file path to a parse error.
    pub fn at_path(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(p.into()),
                line,
                message,
            },
            other => other,
        }
    }

    /// Short machine-readable identifier for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Domain(_) => "domain",
            Error::Infeasible(_) => "infeasible_node_distribution",
            Error::ShapingFailure { .. } => "shaping_failure",
            Error::NoFeasiblePair => "no_feasible_pair",
            Error::PackingInfeasible { .. } => "packing_infeasible",
            Error::CapacityViolation { .. } => "capacity_violation",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 for configuration and input errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::Domain(_) | Error::Infeasible(_) => 2,
            _ => 1,
        }
    }

    /// Structured form of the error for machine consumption.
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        let map = obj.as_object_mut().expect("object literal");
        match self {
            Error::Config { field, .. } => {
                map.insert("field".into(), field.clone().into());
            }
            Error::ShapingFailure { best_jsd, attempts, .. } => {
                map.insert("best_jsd".into(), (*best_jsd).into());
                map.insert("attempts".into(), (*attempts).into());
            }
            Error::PackingInfeasible { flow, size } => {
                map.insert("flow".into(), (*flow).into());
                map.insert("size".into(), (*size).into());
            }
            Error::Parse { line, path, .. } => {
                map.insert("line".into(), (*line).into());
                if let Some(p) = path {
                    map.insert("path".into(), p.display().to_string().into());
                }
            }
            _ => {}
        }
        obj
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
