//! Reduced-order truth model of the plant (the emulated Physical Asset).

pub mod actuator;
pub mod constants;
mod emulator;
pub mod pid;

pub use actuator::{PumpActuator, K_COMMISSION};
pub use constants::{
    PlantConstants, FULL_POWER, MIN_POWER_FRAC, ROD_RATE_MAX, SG_EXIT_TEMP, SHOCK_ENVELOPE_K,
    T_C_IN_SETPOINT, T_C_OUT_SETPOINT,
};
pub use emulator::{
    apply_maintenance, inject_sg_shock, measure, measure_by_name, step_plant, PlantError,
    PlantInternals, PlantState, ShockOutcome,
};
pub(crate) use emulator::sample_mvn;
