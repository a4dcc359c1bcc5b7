//! Iodine/xenon balance in reactivity-equivalent units.
//!
//! Shared physics sub-model: the plant emulator integrates it as truth, and
//! the surrogate network embeds it as the hybrid xenon block. Concentrations
//! are scaled so the xenon reactivity contribution is `-n_xe` directly.

use crate::plant::constants::{XenonConstants, FULL_POWER};

/// Advance the iodine -> xenon production/decay/burnup balance by `dt` at the
/// given core power. Returns the new concentrations and the xenon reactivity
/// contribution.
pub fn xenon_update(
    n_i: f64,
    n_xe: f64,
    power: f64,
    dt: f64,
    c: &XenonConstants,
) -> (f64, f64, f64) {
    let p = (power / FULL_POWER).max(0.0);
    let di = c.lambda_iodine * (c.iodine_eq_full() * p - n_i);
    let dxe = c.lambda_iodine * n_i + c.direct_production_full() * p
        - (c.lambda_xenon + c.burnup_rate_full * p) * n_xe;
    let n_i2 = (n_i + di * dt).max(0.0);
    let n_xe2 = (n_xe + dxe * dt).max(0.0);
    (n_i2, n_xe2, -n_xe2)
}

/// Closed-form equilibrium of the two-ODE system at a held power fraction.
pub fn xenon_equilibrium(power_frac: f64, c: &XenonConstants) -> (f64, f64) {
    let p = power_frac.max(0.0);
    let i_eq = c.iodine_eq_full() * p;
    let x_eq = (c.lambda_iodine * i_eq + c.direct_production_full() * p)
        / (c.lambda_xenon + c.burnup_rate_full * p);
    (i_eq, x_eq)
}
