use thiserror::Error;

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures (CFL, positivity, leakage).
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for an optimizer whose line search stalled.
pub const EXIT_STALL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: kuramoto_core::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn core(module: &'static str) -> impl Fn(kuramoto_core::Error) -> CliError {
        move |source| CliError::Core { module, source }
    }

    pub fn io(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core { source, .. } if source.is_numerical() => EXIT_NUMERICAL,
            CliError::Core { .. } => EXIT_CONFIG,
            CliError::Io { .. } => 1,
        }
    }

    /// Module-qualified code such as `mean_field_pde.cfl`.
    pub fn code(&self) -> String {
        match self {
            CliError::Config(_) => "cli_runner.config".into(),
            CliError::Core { module, source } => format!("{module}.{}", source.code()),
            CliError::Io { .. } => "cli_runner.io".into(),
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": {
                "code": self.code(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}
