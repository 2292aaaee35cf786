use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

/// Errors raised while computing or writing. Failures while reading the
/// configuration are mapped to [`CliError::Config`] at the call site.
impl From<einsel_core::Error> for CliError {
    fn from(e: einsel_core::Error) -> Self {
        use einsel_core::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::Json(_) | E::Schema(_) => CliError::Io(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
