use thiserror::Error;

/// Failures surfaced to the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("{0}")]
    ToleranceExhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Schedule(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::ToleranceExhausted(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<rampguard_core::ScheduleError> for CliError {
    fn from(e: rampguard_core::ScheduleError) -> Self {
        CliError::Schedule(e.to_string())
    }
}

impl From<rampguard_core::simulation::SimulationError> for CliError {
    fn from(e: rampguard_core::simulation::SimulationError) -> Self {
        use rampguard_core::simulation::SimulationError as E;
        match e {
            E::Scenario(_) | E::Exponent(_) | E::Setup(_) | E::NoReplications => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
