//! Orchestrator and user surface: the four-timescale scheduler, scenario
//! configuration, run logs with CSV/JSON/SVG emission, offline preparation,
//! and the demonstration presets.

pub mod config;
pub mod demos;
pub mod log;
pub mod plots;
pub mod prep;
pub mod scheduler;

pub use config::{ScenarioConfig, TimescaleConfig};
pub use log::{emit_outputs, read_state_csv, write_state_csv, RunLog};
pub use scheduler::{prepare_scenario, run_prepared, run_scenario, PreparedScenario};

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("log error: {0}")]
    Log(String),
    #[error("plant error: {0}")]
    Plant(String),
    #[error("governor error: {0}")]
    Governor(String),
    #[error(transparent)]
    Surrogate(#[from] crate::surrogate::SurrogateError),
    #[error(transparent)]
    Enkf(#[from] crate::enkf::EnkfError),
    #[error(transparent)]
    Operator(#[from] crate::operator::OperatorError),
    #[error(transparent)]
    Pump(#[from] crate::pump::PumpError),
    #[error(transparent)]
    Sobol(#[from] crate::sobol::SobolError),
}

impl From<crate::plant::PlantError> for RuntimeError {
    fn from(e: crate::plant::PlantError) -> Self {
        RuntimeError::Plant(e.to_string())
    }
}

impl From<prep::PrepError> for RuntimeError {
    fn from(e: prep::PrepError) -> Self {
        match e {
            prep::PrepError::Plant(p) => RuntimeError::Plant(p.to_string()),
            prep::PrepError::Surrogate(s) => RuntimeError::Surrogate(s),
        }
    }
}
