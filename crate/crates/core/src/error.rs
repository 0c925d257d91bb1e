use thiserror::Error;

use crate::energy::HostId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no telemetry")]
    NoTelemetry,

    #[error("malformed sample: {0}")]
    MalformedSample(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no history")]
    NoHistory,

    #[error("unknown host {0}")]
    UnknownHost(HostId),

    #[error("negative interval: dt = {0}")]
    NegativeInterval(f64),

    #[error("non-positive duration: {0}")]
    NonPositiveDuration(f64),

    #[error("infeasible workload: {0}")]
    InfeasibleWorkload(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
