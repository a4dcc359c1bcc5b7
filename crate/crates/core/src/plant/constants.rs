//! Physical constants and calibration knobs of the plant emulator.
//!
//! Kinetics and xenon constants are standard published thermal-reactor values;
//! thermal inertias, loop volumes, and transport lags are declared calibration
//! knobs. Everything here can be overridden from a TOML constants file.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::PlantError;

/// Full reactor thermal power [W].
pub const FULL_POWER: f64 = 280.0e6;

/// Lower bound of the governed operating range as a fraction of full power.
pub const MIN_POWER_FRAC: f64 = 0.5;

/// Core outlet temperature setpoint [K].
pub const T_C_OUT_SETPOINT: f64 = 923.15;

/// Core inlet temperature setpoint [K].
pub const T_C_IN_SETPOINT: f64 = 823.15;

/// Nominal SG exit temperature boundary condition [K].
pub const SG_EXIT_TEMP: f64 = 773.15;

/// Control-rod speed limit [m/s] (0.3075 mm/s).
pub const ROD_RATE_MAX: f64 = 0.3075e-3;

/// Shock envelope covered by the trained surrogate [K].
pub const SHOCK_ENVELOPE_K: f64 = 8.0;

/// Six-group point-kinetics data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KineticsConstants {
    /// Delayed neutron fractions per group.
    pub beta: [f64; 6],
    /// Precursor decay constants [1/s].
    pub lambda: [f64; 6],
    /// Mean neutron generation time [s].
    pub gen_time: f64,
}

impl KineticsConstants {
    pub fn beta_total(&self) -> f64 {
        self.beta.iter().sum()
    }
}

impl Default for KineticsConstants {
    fn default() -> Self {
        KineticsConstants {
            beta: [0.000215, 0.001424, 0.001274, 0.002568, 0.000748, 0.000273],
            lambda: [0.0124, 0.0305, 0.111, 0.301, 1.14, 3.01],
            gen_time: 5.0e-4,
        }
    }
}

/// Reactivity feedback coefficients and reference temperatures.
///
/// References are fixed at the 100%-power commissioning state so that all
/// feedback terms vanish there.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConstants {
    /// Fuel (Doppler) coefficient [dk/k per K].
    pub alpha_fuel: f64,
    /// Coolant coefficient [dk/k per K].
    pub alpha_coolant: f64,
    /// Moderator coefficient [dk/k per K].
    pub alpha_moderator: f64,
    /// Fuel reference temperature [K].
    pub t_fuel_ref: f64,
    /// Coolant reference temperature [K].
    pub t_coolant_ref: f64,
    /// Moderator reference temperature [K].
    pub t_moderator_ref: f64,
    /// Moderator thermal lag [s].
    pub tau_moderator: f64,
}

impl Default for FeedbackConstants {
    fn default() -> Self {
        FeedbackConstants {
            alpha_fuel: -3.8e-5,
            alpha_coolant: -1.2e-5,
            alpha_moderator: -0.7e-5,
            t_fuel_ref: 923.15,
            t_coolant_ref: 873.15,
            t_moderator_ref: 873.15,
            tau_moderator: 120.0,
        }
    }
}

/// Iodine/xenon balance in reactivity-equivalent concentration units: the
/// state entries `n_i`/`n_xe` are scaled so the xenon reactivity contribution
/// is simply `-n_xe`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct XenonConstants {
    /// I-135 decay constant [1/s].
    pub lambda_iodine: f64,
    /// Xe-135 decay constant [1/s].
    pub lambda_xenon: f64,
    /// Xenon burnup rate at full power [1/s].
    pub burnup_rate_full: f64,
    /// Equilibrium xenon worth at full power [dk/k].
    pub eq_worth_full: f64,
    /// Fraction of xenon production routed through the iodine chain.
    pub iodine_fraction: f64,
}

impl XenonConstants {
    /// Equilibrium iodine level at full power (reactivity-equivalent units).
    pub fn iodine_eq_full(&self) -> f64 {
        self.iodine_fraction * (self.lambda_xenon + self.burnup_rate_full) * self.eq_worth_full
            / self.lambda_iodine
    }

    /// Direct (non-iodine) xenon production rate at full power [1/s units of worth].
    pub fn direct_production_full(&self) -> f64 {
        (1.0 - self.iodine_fraction)
            * (self.lambda_xenon + self.burnup_rate_full)
            * self.eq_worth_full
    }
}

impl Default for XenonConstants {
    fn default() -> Self {
        XenonConstants {
            lambda_iodine: 2.8734e-5,
            lambda_xenon: 2.0927e-5,
            burnup_rate_full: 3.5e-5,
            eq_worth_full: 3.0e-3,
            iodine_fraction: 0.95,
        }
    }
}

/// Control-rod worth model: `rho_cr = worth_per_m * (z - z_ref)`, where `z`
/// is the withdrawal position (withdrawing adds reactivity).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RodConstants {
    /// Differential worth [dk/k per m]. Sized so that rod motion at the rate
    /// limit translates to a 5%-of-full-power-per-minute power slew.
    pub worth_per_m: f64,
    /// Withdrawal position producing zero rod reactivity [m].
    pub z_ref: f64,
    /// Rod travel span [m].
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for RodConstants {
    fn default() -> Self {
        RodConstants {
            worth_per_m: 5.15e-3,
            z_ref: 1.0,
            z_min: 0.0,
            z_max: 2.0,
        }
    }
}

/// Lumped thermal-hydraulic data for the two-loop system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalConstants {
    /// Primary salt specific heat [J/(kg K)].
    pub cp_primary: f64,
    /// Primary salt density [kg/m3].
    pub rho_primary: f64,
    /// Secondary salt specific heat [J/(kg K)].
    pub cp_secondary: f64,
    /// Secondary salt density [kg/m3].
    pub rho_secondary: f64,
    /// Fuel node heat capacity [J/K].
    pub fuel_heat_capacity: f64,
    /// Core coolant node heat capacity [J/K].
    pub core_coolant_heat_capacity: f64,
    /// IHX primary-side node heat capacity [J/K].
    pub ihx_primary_heat_capacity: f64,
    /// IHX secondary-side node heat capacity [J/K].
    pub ihx_secondary_heat_capacity: f64,
    /// Fuel-to-coolant conductance [W/K].
    pub h_fuel_coolant: f64,
    /// IHX conductance at reference flows [W/K].
    pub ua_ihx_ref: f64,
    /// Flow exponent of the IHX conductance.
    pub ua_flow_exponent: f64,
    /// Transport lags [s].
    pub tau_hot_leg: f64,
    pub tau_cold_leg: f64,
    pub tau_sec_hot_leg: f64,
    pub tau_sec_cold_leg: f64,
    pub tau_sg_boundary: f64,
}

impl Default for ThermalConstants {
    fn default() -> Self {
        ThermalConstants {
            cp_primary: 2386.0,
            rho_primary: 1940.0,
            cp_secondary: 1561.0,
            rho_secondary: 1940.0,
            fuel_heat_capacity: 6.8e7,
            core_coolant_heat_capacity: 4.6e7,
            ihx_primary_heat_capacity: 3.0e7,
            ihx_secondary_heat_capacity: 3.0e7,
            h_fuel_coolant: 5.6e6,
            ua_ihx_ref: 5.526e6,
            ua_flow_exponent: 0.8,
            tau_hot_leg: 15.0,
            tau_cold_leg: 25.0,
            tau_sec_hot_leg: 20.0,
            tau_sec_cold_leg: 20.0,
            tau_sg_boundary: 15.0,
        }
    }
}

/// Rated data for one centrifugal pump.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PumpConstants {
    /// Rated head [Pa].
    pub rated_head: f64,
    /// Rated volumetric flow [m3/s].
    pub rated_flow: f64,
    /// Rated speed [RPM].
    pub rated_speed: f64,
    /// Drive mechanical efficiency.
    pub eta_mech: f64,
    /// Speed lag [s].
    pub tau_speed: f64,
    /// Speed command limits as fractions of rated speed.
    pub speed_frac_min: f64,
    pub speed_frac_max: f64,
}

impl PumpConstants {
    /// Loop hydraulic resistance [Pa s2/m6]: rated head at rated flow.
    pub fn loop_resistance(&self) -> f64 {
        self.rated_head / (self.rated_flow * self.rated_flow)
    }
}

impl Default for PumpConstants {
    fn default() -> Self {
        PumpConstants {
            rated_head: 0.5e6,
            rated_flow: 0.604,
            rated_speed: 890.0,
            eta_mech: 0.75,
            tau_speed: 8.0,
            speed_frac_min: 0.10,
            speed_frac_max: 1.30,
        }
    }
}

/// Static pressure bookkeeping: base loop pressure plus declared fractions of
/// the pump head dropped across each component.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PressureConstants {
    pub base_primary: f64,
    pub base_secondary: f64,
}

impl Default for PressureConstants {
    fn default() -> Self {
        PressureConstants {
            base_primary: 2.0e5,
            base_secondary: 3.0e5,
        }
    }
}

/// PID gains for the three control loops. Tuned so the 5%/min slew and the
/// +/-2 K regulation tolerance hold; config, not code constants. Gains act on
/// `setpoint - measured`; the two temperature loops are reverse-acting
/// (temperature above setpoint needs more pump flow), hence negative gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConstants {
    /// Rod loop: proportional gain [m/s per unit power-fraction error].
    pub rod_kp: f64,
    pub rod_ki: f64,
    /// Primary pump loop: speed fraction per K of core-outlet error.
    pub primary_kp: f64,
    pub primary_ki: f64,
    /// Secondary pump loop: speed fraction per K of core-inlet error.
    pub secondary_kp: f64,
    pub secondary_ki: f64,
}

impl Default for ControlConstants {
    fn default() -> Self {
        ControlConstants {
            rod_kp: 1.55e-2,
            rod_ki: 5.0e-5,
            primary_kp: -4.0e-3,
            primary_ki: -1.0e-4,
            secondary_kp: -6.0e-3,
            secondary_ki: -1.5e-4,
        }
    }
}

/// Full constants set of the plant emulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConstants {
    pub kinetics: KineticsConstants,
    pub feedback: FeedbackConstants,
    pub xenon: XenonConstants,
    pub rod: RodConstants,
    pub thermal: ThermalConstants,
    pub primary_pump: PumpConstants,
    pub secondary_pump: PumpConstants,
    pub pressure: PressureConstants,
    pub control: ControlConstants,
    /// Internal integration substeps per outer step.
    pub substeps_per_step: usize,
}

impl PlantConstants {
    /// Reference primary mass flow [kg/s] (rated pump flow).
    pub fn m_dot_primary_ref(&self) -> f64 {
        self.thermal.rho_primary * self.primary_pump.rated_flow
    }

    /// Reference secondary mass flow [kg/s] (rated pump flow).
    pub fn m_dot_secondary_ref(&self) -> f64 {
        self.thermal.rho_secondary * self.secondary_pump.rated_flow
    }

    /// Load constants from a TOML file. Missing sections fall back to defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self, PlantError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlantError::Constants(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PlantError> {
        toml::from_str(text).map_err(|e| PlantError::Constants(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("constants serialize")
    }
}

impl Default for PlantConstants {
    fn default() -> Self {
        PlantConstants {
            kinetics: KineticsConstants::default(),
            feedback: FeedbackConstants::default(),
            xenon: XenonConstants::default(),
            rod: RodConstants::default(),
            thermal: ThermalConstants::default(),
            primary_pump: PumpConstants {
                rated_head: 0.5e6,
                rated_flow: 0.604,
                rated_speed: 890.0,
                eta_mech: 0.75,
                tau_speed: 8.0,
                speed_frac_min: 0.10,
                speed_frac_max: 1.30,
            },
            secondary_pump: PumpConstants {
                rated_head: 0.4e6,
                rated_flow: 0.937,
                rated_speed: 1180.0,
                eta_mech: 0.75,
                tau_speed: 8.0,
                speed_frac_min: 0.10,
                speed_frac_max: 1.30,
            },
            pressure: PressureConstants::default(),
            control: ControlConstants::default(),
            substeps_per_step: 5,
        }
    }
}
