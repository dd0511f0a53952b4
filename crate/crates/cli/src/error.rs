use thiserror::Error;

/// Process exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// A verification check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{field}: {source}")]
    Invalid {
        field: &'static str,
        #[source]
        source: carnot_core::Error,
    },

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] carnot_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Wraps a library error raised while checking `field`.
    pub fn field(field: &'static str) -> impl Fn(carnot_core::Error) -> CliError {
        move |source| match source {
            carnot_core::Error::Io(_) | carnot_core::Error::Csv(_) => {
                CliError::Io(source.to_string())
            }
            _ => CliError::Invalid { field, source },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid { .. } => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Core(e) => match e {
                carnot_core::Error::Io(_) | carnot_core::Error::Csv(_) => EXIT_IO,
                carnot_core::Error::InvalidParameter(_)
                | carnot_core::Error::OutOfRange(_)
                | carnot_core::Error::NotHType(_)
                | carnot_core::Error::Json(_) => EXIT_USAGE,
                _ => EXIT_CHECK_FAILED,
            },
        }
    }
}
