//! Physics-based degradation and health tracking of the two pumps.
//!
//! The loss coefficient `K` grows with operating time, flow, and flow change:
//! `dK = r_base * phi * (1 + alpha*V + alpha_mdot*|dV|) * (1 + xi)`, with
//! `xi ~ N(0, sigma_I^2)` and `r_base` calibrated so that constant operation
//! at rated flow reaches the declared fractional head loss `lambda_D` at
//! `t = T_D`. Fractional head loss maps to K as `1 - 1/K` (the emulator's
//! head multiplier is `1/K`). The health index is `eta = 1 - K / 3.125`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::plant::constants::PlantConstants;
use crate::state::{SystemState, VarId};

/// Minimum degradation loss coefficient: the health index hits zero here.
pub const K_FLOOR: f64 = 3.125;

/// Commissioning loss coefficient of a fresh pump.
pub const K_COMMISSION: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum PumpError {
    #[error("degradation parameters invalid: {0}")]
    InvalidParams(String),
    #[error("non-finite input to degradation update")]
    NonFinite,
}

/// Pump side selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PumpSide {
    Primary,
    Secondary,
}

/// Degradation parameter set (one per pump).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationParams {
    /// Fractional pump head loss target [%].
    pub lambda_d_pct: f64,
    /// Time at which `lambda_d` is reached under constant rated flow [s].
    pub t_d: f64,
    /// Degradation uncertainty (lognormal multiplier on the base rate, drawn
    /// once per pump life).
    pub sigma_d: f64,
    /// Per-update noise scale on the increment.
    pub sigma_i: f64,
    /// Flow-rate scaling [per m3/s].
    pub alpha: f64,
    /// Flow-rate-change scaling [per m3/s].
    pub alpha_m_dot: f64,
    /// Health-model time step [s].
    pub phi: f64,
}

impl DegradationParams {
    pub fn validate(&self) -> Result<(), PumpError> {
        if self.t_d.is_nan() || self.t_d <= 0.0 {
            return Err(PumpError::InvalidParams(format!("t_d = {}", self.t_d)));
        }
        if !(0.0 < self.lambda_d_pct && self.lambda_d_pct < 100.0) {
            return Err(PumpError::InvalidParams(format!(
                "lambda_d_pct = {}",
                self.lambda_d_pct
            )));
        }
        if self.sigma_d < 0.0 || self.sigma_i < 0.0 || self.phi.is_nan() || self.phi <= 0.0 {
            return Err(PumpError::InvalidParams("negative noise scale or phi".into()));
        }
        Ok(())
    }

    /// Demonstration parameter set for the primary pump.
    pub fn primary_demo() -> Self {
        let v_bar = 0.604;
        DegradationParams {
            lambda_d_pct: 10.0,
            t_d: 4.6656e7,
            sigma_d: 0.0,
            sigma_i: 0.5e-3,
            alpha: 1.0 / v_bar,
            alpha_m_dot: 1.0 / v_bar,
            phi: 5.0,
        }
    }

    /// Demonstration parameter set for the secondary pump.
    pub fn secondary_demo() -> Self {
        let v_bar = 0.937;
        DegradationParams {
            lambda_d_pct: 10.0,
            t_d: 2.592e7,
            sigma_d: 0.0,
            sigma_i: 1.0e-3,
            alpha: 1.0 / v_bar,
            alpha_m_dot: 1.0 / v_bar,
            phi: 5.0,
        }
    }
}

/// Health index `eta = 1 - K / K_FLOOR`.
pub fn health_index(k: f64) -> f64 {
    1.0 - k / K_FLOOR
}

/// Loss coefficient at a given fractional head loss (head multiplier `1/K`).
pub fn k_at_head_loss(fraction: f64) -> f64 {
    K_COMMISSION / (1.0 - fraction)
}

/// Fractional head loss at a given loss coefficient.
pub fn head_loss_fraction(k: f64) -> f64 {
    1.0 - K_COMMISSION / k
}

/// Calibrated degradation law for one pump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationModel {
    pub params: DegradationParams,
    /// Base rate [1/s], including any sigma_D life-draw multiplier.
    r_base: f64,
}

impl DegradationModel {
    /// Calibrate the base rate against the rated volumetric flow so that
    /// constant operation there reaches `lambda_d` head loss at `t_d`.
    pub fn new<R: Rng + ?Sized>(
        params: DegradationParams,
        rated_flow: f64,
        rng: &mut R,
    ) -> Result<Self, PumpError> {
        params.validate()?;
        let dk_total = k_at_head_loss(params.lambda_d_pct / 100.0) - K_COMMISSION;
        let stress_rated = 1.0 + params.alpha * rated_flow;
        let mut r_base = dk_total / (params.t_d * stress_rated);
        if params.sigma_d > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            r_base *= (params.sigma_d * z).exp();
        }
        Ok(DegradationModel { params, r_base })
    }

    pub fn r_base(&self) -> f64 {
        self.r_base
    }

    /// Advance the loss coefficient by one health step at volumetric flow `v`
    /// [m3/s] and per-step flow change `dv` [m3/s].
    pub fn degrade<R: Rng + ?Sized>(
        &self,
        k: f64,
        v: f64,
        dv: f64,
        rng: &mut R,
    ) -> Result<f64, PumpError> {
        if !(k.is_finite() && v.is_finite() && dv.is_finite()) {
            return Err(PumpError::NonFinite);
        }
        let noise = if self.params.sigma_i > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            1.0 + self.params.sigma_i * z
        } else {
            1.0
        };
        let dk = (self.expected_increment(v, dv) * noise).max(0.0);
        Ok(k + dk)
    }

    /// Deterministic increment for rollout prediction (noise off).
    pub fn expected_increment(&self, v: f64, dv: f64) -> f64 {
        let stress = 1.0 + self.params.alpha * v.max(0.0) + self.params.alpha_m_dot * dv.abs();
        self.r_base * self.params.phi * stress
    }
}

/// Health record of one pump (Table A.4 entries minus time).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PumpHealth {
    /// Required power with degradation [W].
    pub q_required_degraded: f64,
    /// Required power [W].
    pub q_required: f64,
    /// Loss coefficient.
    pub k: f64,
    /// Health index.
    pub eta: f64,
}

impl PumpHealth {
    pub fn fresh() -> Self {
        Self::at_k(K_COMMISSION)
    }

    pub fn at_k(k: f64) -> Self {
        PumpHealth {
            q_required_degraded: 0.0,
            q_required: 0.0,
            k,
            eta: health_index(k),
        }
    }
}

/// The 9-entry pump health state vector: time plus one record per pump.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PumpHealthState {
    pub t: f64,
    pub primary: PumpHealth,
    pub secondary: PumpHealth,
}

impl PumpHealthState {
    pub fn new(t: f64, k_p: f64, k_s: f64) -> Self {
        PumpHealthState {
            t,
            primary: PumpHealth::at_k(k_p),
            secondary: PumpHealth::at_k(k_s),
        }
    }

    /// Table A.4 vector order.
    pub fn to_vec(&self) -> [f64; 9] {
        [
            self.t,
            self.primary.q_required_degraded,
            self.primary.q_required,
            self.primary.k,
            self.primary.eta,
            self.secondary.q_required_degraded,
            self.secondary.q_required,
            self.secondary.k,
            self.secondary.eta,
        ]
    }

    pub fn csv_header() -> [&'static str; 9] {
        [
            "t", "q_p_d_p", "q_p_p", "k_p", "eta_p", "q_p_d_s", "q_p_s", "k_s", "eta_s",
        ]
    }
}

/// Required pump powers from the hydraulic state: `Q_P = dP * V / eta_mech`,
/// degraded requirement scaled by the head penalty `K`.
pub fn pump_required_power(
    sys: &SystemState,
    side: PumpSide,
    k: f64,
    consts: &PlantConstants,
) -> (f64, f64) {
    let (dp, m_dot, rho, eta_mech) = match side {
        PumpSide::Primary => (
            sys[VarId::DpP],
            sys[VarId::MDotPP],
            consts.thermal.rho_primary,
            consts.primary_pump.eta_mech,
        ),
        PumpSide::Secondary => (
            sys[VarId::DpS],
            sys[VarId::MDotPS],
            consts.thermal.rho_secondary,
            consts.secondary_pump.eta_mech,
        ),
    };
    let v = m_dot / rho;
    let q_p = dp * v / eta_mech;
    (q_p, k.max(K_COMMISSION) * q_p)
}

/// Advance one pump's health record with its current hydraulics. Returns the
/// updated record and the volumetric flow used (caller feeds it back as the
/// next step's previous flow).
pub fn update_pump_health<R: Rng + ?Sized>(
    health: &PumpHealth,
    model: &DegradationModel,
    sys: &SystemState,
    side: PumpSide,
    prev_flow_m3: f64,
    consts: &PlantConstants,
    rng: &mut R,
) -> Result<(PumpHealth, f64), PumpError> {
    let rho = match side {
        PumpSide::Primary => consts.thermal.rho_primary,
        PumpSide::Secondary => consts.thermal.rho_secondary,
    };
    let m_dot = match side {
        PumpSide::Primary => sys[VarId::MDotPP],
        PumpSide::Secondary => sys[VarId::MDotPS],
    };
    let v = m_dot / rho;
    let dv = v - prev_flow_m3;
    let k = model.degrade(health.k, v, dv, rng)?;
    let (q_p, q_p_d) = pump_required_power(sys, side, k, consts);
    Ok((
        PumpHealth {
            q_required_degraded: q_p_d,
            q_required: q_p,
            k,
            eta: health_index(k),
        },
        v,
    ))
}
