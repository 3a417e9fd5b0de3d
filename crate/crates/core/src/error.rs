use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad numeric input to an operation (non-finite value, mismatched lengths, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Inconsistent or unusable configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (unfrozen thresholds, arithmetic on MISSING, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}, column `{column}`: {message}")]
    Row {
        line: u64,
        column: String,
        message: String,
    },

    #[error("duplicate sample_id `{id}` on lines {first_line} and {second_line}")]
    DuplicateSample {
        id: String,
        first_line: u64,
        second_line: u64,
    },

    /// An error raised inside a module while processing a particular sample.
    #[error("[{module}]{} {source}", sample.as_ref().map(|s| format!(" sample `{s}`:")).unwrap_or_default())]
    Context {
        module: &'static str,
        sample: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Wraps the error with the module and, optionally, the sample it came from.
    pub fn within(self, module: &'static str, sample: Option<&str>) -> Self {
        Error::Context {
            module,
            sample: sample.map(str::to_owned),
            source: Box::new(self),
        }
    }

    /// True when the root cause is a violated precondition rather than bad input.
    pub fn is_contract_violation(&self) -> bool {
        match self {
            Error::Contract(_) => true,
            Error::Context { source, .. } => source.is_contract_violation(),
            _ => false,
        }
    }
}
