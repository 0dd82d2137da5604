use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: symvi_core::Error,
    },

    #[error("io failure at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 for a bad config, 3 for numerical failures,
    /// 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvalidConfig(_) => 2,
            HarnessError::Numerical { .. } => 3,
            HarnessError::Io { .. } => 1,
        }
    }
}

/// Attaches experiment context to a core error.
pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, HarnessError>;
}

impl<T> Context<T> for symvi_core::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, HarnessError> {
        self.map_err(|source| match source {
            symvi_core::Error::InvalidParameter(m) => HarnessError::InvalidConfig(m),
            source => HarnessError::Numerical {
                context: what.into(),
                source,
            },
        })
    }
}
