//! Closed-loop digital twin for a two-loop high-temperature reactor plant.
//!
//! The crate mirrors a reduced-order truth emulator of the plant with a hybrid
//! VARMAX surrogate that is continuously recalibrated by an Ensemble Kalman
//! Filter, while a Reference Governor keeps operation inside pump-flow and
//! temperature constraints and a receding-horizon Operator sets hourly power
//! targets and schedules pump maintenance from component health.
//!
//! Module map:
//! - [`plant`]: point-kinetics + lumped thermal-hydraulics truth emulator with
//!   three PID loops and homologous pumps.
//! - [`surrogate`]: VARMAX blocks, the wired surrogate network (original and
//!   shock-adapted variants), xenon physics, and the least-squares fitter.
//! - [`pump`]: pump degradation, health indices, and required-power bookkeeping.
//! - [`enkf`]: ensemble Kalman filtering with joint state/parameter estimation.
//! - [`governor`]: reference-governor setpoint filtering and constraint audits.
//! - [`operator`]: surrogate compression, cross-entropy planning, maintenance.
//! - [`sobol`]: Saltelli sampling and Sobol index estimation for parameter
//!   selection.
//! - [`runtime`]: the four-timescale scheduler, scenario configs, logs, CSV/JSON/SVG
//!   emission, and the demo presets.

pub mod enkf;
pub mod exec;
pub mod governor;
pub mod operator;
pub mod plant;
pub mod pump;
pub mod runtime;
pub mod seed;
pub mod sobol;
pub mod state;
#[cfg(test)]
pub(crate) mod test_fixtures;
pub mod surrogate;

pub use state::{SystemState, VarId, N_VARS};
