use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// One entry per violated invariant, so a user can fix a config in one pass.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("records: row {row}: {message}")]
    Record { row: usize, message: String },

    #[error("reserve: {0}")]
    Reserve(String),

    #[error("estimation: {0}")]
    Estimation(String),

    #[error("horizon: {0}")]
    Horizon(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("finance: {0}")]
    Finance(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// Process exit code: 1 for validation problems (config, arguments,
    /// horizon), 2 for problems in the data itself.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ConfigParse(_) | Error::Horizon(_) | Error::Finance(_) => 1,
            Error::Simulation(_) => 1,
            Error::Record { .. } | Error::Reserve(_) | Error::Estimation(_) | Error::Model(_) | Error::Io { .. } => 2,
        }
    }
}
