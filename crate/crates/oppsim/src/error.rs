use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid configuration (bad key, violated precondition, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Power calibration failed to converge.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A verification check failed.
    #[error("verification failure: {0}")]
    Verification(String),

    /// Constant fitting was asked for with insufficient data.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code for the CLI: 1 config, 2 verification, 3 calibration.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 1,
            SimError::Verification(_) => 2,
            SimError::Calibration(_) => 3,
            SimError::Fit(_) => 1,
            SimError::Io(_) => 1,
        }
    }
}
