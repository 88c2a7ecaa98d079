use std::fmt;

/// A failure with a stable, machine-parsable class name.
#[derive(Debug)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        CliError { class, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("UsageError", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.class, self.message)
    }
}

macro_rules! classed {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.class(), e.to_string())
            }
        })*
    };
}

classed!(
    radsum_core::CorpusError,
    radsum_core::workspace::WorkspaceError,
    radsum_core::pipeline::PipelineError,
    radsum_core::translate::TranslateError,
    radsum_core::summarize::SummarizeError,
    radsum_core::summarize::ProviderError,
    radsum_core::rouge::EvalError,
    radsum_core::human_eval::EvalServiceError,
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("IoError", e.to_string())
    }
}

impl From<radsum_core::predictions::PredictionsError> for CliError {
    fn from(e: radsum_core::predictions::PredictionsError) -> Self {
        let class = match e {
            radsum_core::predictions::PredictionsError::Schema { .. } => "SchemaError",
            radsum_core::predictions::PredictionsError::Io(_) => "IoError",
        };
        CliError::new(class, e.to_string())
    }
}
