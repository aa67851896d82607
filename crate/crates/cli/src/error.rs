use thiserror::Error;

/// Failures of a pipeline run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or a missing upstream artifact.
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    /// Exploration drew almost nothing inside the working space.
    #[error("exploration aborted: {0}")]
    Rejection(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// One or more acceptance checks failed; the reports were still written.
    #[error("analysis failed: {0}")]
    AnalysisFailed(String),

    #[error(transparent)]
    Core(smspace::Error),

    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::AnalysisFailed(_) => 1,
            CliError::Numerical(_) => 3,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<smspace::Error> for CliError {
    fn from(e: smspace::Error) -> Self {
        match e {
            smspace::Error::InvalidInput(m) => CliError::Config(m),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Core(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::AnalysisFailed("x".into()).exit_code(), 1);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Rejection("x".into()).exit_code(), 2);
        assert_eq!(CliError::Numerical("x".into()).exit_code(), 3);
        let singular: CliError = smspace::Error::Singular { sigma: 0.0 }.into();
        assert_eq!(singular.exit_code(), 3);
        let invalid: CliError = smspace::Error::InvalidInput("bad".into()).into();
        assert_eq!(invalid.exit_code(), 2);
        let pair = CliError::Core(smspace::Error::Pair {
            i: 0,
            j: 1,
            source: Box::new(smspace::Error::NonClosure { steps: 1, distance: 1.0 }),
        });
        assert_eq!(pair.exit_code(), 3);
    }
}
