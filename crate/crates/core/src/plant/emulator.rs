//! Reduced-order truth model of the two-loop plant.
//!
//! Point-kinetics core power (six precursor groups, reactivity feedback from
//! fuel/coolant/moderator/xenon plus control-rod insertion), lumped loop
//! energy balances, three PID loops, and homologous pumps. Kinetics advance
//! with backward-Euler substeps (the prompt mode is far stiffer than the 5 s
//! outer step); thermal nodes advance explicitly on the same substep grid.
//! SG heat transfer is not modeled: the SG exit temperature is a boundary
//! condition.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::actuator::{PumpActuator, K_COMMISSION};
use super::constants::*;
use super::pid::PidController;
use crate::state::{SystemState, VarId};

#[derive(Debug, thiserror::Error)]
pub enum PlantError {
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("setpoint {0} W outside physical range [0, {FULL_POWER}]")]
    SetpointOutOfRange(f64),
    #[error("state integration produced non-finite values after {0} substep refinements")]
    NumericalBlowup(usize),
    #[error("input state contains non-finite values")]
    NonFiniteState,
    #[error("empty observation set")]
    EmptyObservationSet,
    #[error("unknown variable id: {0}")]
    UnknownVariable(String),
    #[error("measurement covariance must be {expected}x{expected}, got {rows}x{cols}")]
    GammaDimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("measurement covariance is not positive semi-definite")]
    GammaNotPsd,
    #[error("maintenance requested outside a shutdown window")]
    OutsideMaintenanceWindow,
    #[error("constants file error: {0}")]
    Constants(String),
}

/// Controller and node states not visible in the 42-entry observable vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantInternals {
    pub t_fuel: f64,
    pub t_moderator: f64,
    /// Active SG exit boundary temperature [K] (nominal plus any shock).
    pub sg_boundary_temp: f64,
    /// Set when a shock outside the trained envelope was injected.
    pub shock_envelope_exceeded: bool,
    pub rod_pid: PidController,
    pub primary_pid: PidController,
    pub secondary_pid: PidController,
    /// Commanded pump speeds [RPM].
    pub n_cmd_primary: f64,
    pub n_cmd_secondary: f64,
}

/// Full emulator state: the observable system vector plus internals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantState {
    pub sys: SystemState,
    pub internals: PlantInternals,
}

impl PlantState {
    /// Analytic steady state at a held power fraction with the given pump
    /// loss coefficients. Valid for fractions in the governed band.
    pub fn commissioning(power_frac: f64, k_p: f64, k_s: f64, c: &PlantConstants) -> PlantState {
        Self::commissioning_with_boundary(power_frac, k_p, k_s, SG_EXIT_TEMP, c)
    }

    pub fn commissioning_with_boundary(
        power_frac: f64,
        k_p: f64,
        k_s: f64,
        sg_boundary: f64,
        c: &PlantConstants,
    ) -> PlantState {
        assert!(
            (MIN_POWER_FRAC..=1.0).contains(&power_frac),
            "commissioning power fraction {power_frac} outside governed band"
        );
        let q = power_frac * FULL_POWER;
        let th = &c.thermal;
        let mut sys = SystemState::zeros();

        sys[VarId::QDotRx] = q;
        for (i, (b, l)) in c.kinetics.beta.iter().zip(c.kinetics.lambda.iter()).enumerate() {
            sys.0[VarId::C1.index() + i] = b / (c.kinetics.gen_time * l) * q;
        }

        let iodine = c.xenon.iodine_eq_full() * power_frac;
        let xenon = (c.xenon.lambda_iodine * iodine + c.xenon.direct_production_full() * power_frac)
            / (c.xenon.lambda_xenon + c.xenon.burnup_rate_full * power_frac);
        sys[VarId::NI] = iodine;
        sys[VarId::NXe] = xenon;

        sys[VarId::TCOut] = T_C_OUT_SETPOINT;
        sys[VarId::TCIn] = T_C_IN_SETPOINT;
        let t_cool = 0.5 * (T_C_OUT_SETPOINT + T_C_IN_SETPOINT);
        let t_fuel = t_cool + q / th.h_fuel_coolant;

        let m_dot_c = q / (th.cp_primary * (T_C_OUT_SETPOINT - T_C_IN_SETPOINT));
        sys[VarId::MDotC] = m_dot_c;
        sys[VarId::MDotPP] = m_dot_c;

        sys[VarId::TIhxPIn] = T_C_OUT_SETPOINT;
        sys[VarId::TIhxPOut] = T_C_IN_SETPOINT;

        let m_dot_s = solve_secondary_flow(q, m_dot_c, sg_boundary, c);
        let t_s_out = sg_boundary + q / (m_dot_s * th.cp_secondary);
        sys[VarId::MDotS] = m_dot_s;
        sys[VarId::MDotSg] = m_dot_s;
        sys[VarId::MDotPS] = m_dot_s;
        sys[VarId::TIhxSIn] = sg_boundary;
        sys[VarId::TIhxSOut] = t_s_out;
        sys[VarId::TSgIn] = t_s_out;
        sys[VarId::TSgOut] = sg_boundary;

        sys[VarId::QDotHx] = q;
        sys[VarId::QDotSg] = q;

        let mut primary = PumpActuator::new(&c.primary_pump, k_p.max(K_COMMISSION));
        let mut secondary = PumpActuator::new(&c.secondary_pump, k_s.max(K_COMMISSION));
        let v_p = m_dot_c / th.rho_primary;
        let v_s = m_dot_s / th.rho_secondary;
        primary.speed = primary.speed_for_flow(v_p, c.primary_pump.loop_resistance());
        secondary.speed = secondary.speed_for_flow(v_s, c.secondary_pump.loop_resistance());
        let dp_p = c.primary_pump.loop_resistance() * v_p * v_p;
        let dp_s = c.secondary_pump.loop_resistance() * v_s * v_s;
        sys[VarId::NP] = primary.speed;
        sys[VarId::NS] = secondary.speed;
        sys[VarId::DpP] = dp_p;
        sys[VarId::DpS] = dp_s;
        write_pressures(&mut sys, dp_p, dp_s, &c.pressure);

        let rho_f = c.feedback.alpha_fuel * (t_fuel - c.feedback.t_fuel_ref);
        let rho_c = c.feedback.alpha_coolant * (t_cool - c.feedback.t_coolant_ref);
        let rho_m = c.feedback.alpha_moderator * (t_cool - c.feedback.t_moderator_ref);
        let rho_cr = -(rho_f + rho_c + rho_m) + xenon;
        sys[VarId::RhoF] = rho_f;
        sys[VarId::RhoC] = rho_c;
        sys[VarId::RhoM] = rho_m;
        sys[VarId::RhoCr] = rho_cr;
        sys[VarId::ZCr] = (c.rod.z_ref + rho_cr / c.rod.worth_per_m).clamp(c.rod.z_min, c.rod.z_max);

        let mut rod_pid = PidController::new(
            c.control.rod_kp,
            c.control.rod_ki,
            0.0,
            -ROD_RATE_MAX,
            ROD_RATE_MAX,
            power_frac,
        );
        rod_pid.preload_output(0.0);
        let mut primary_pid = PidController::new(
            c.control.primary_kp,
            c.control.primary_ki,
            0.0,
            c.primary_pump.speed_frac_min,
            c.primary_pump.speed_frac_max,
            T_C_OUT_SETPOINT,
        );
        primary_pid.preload_output(primary.speed / c.primary_pump.rated_speed);
        let mut secondary_pid = PidController::new(
            c.control.secondary_kp,
            c.control.secondary_ki,
            0.0,
            c.secondary_pump.speed_frac_min,
            c.secondary_pump.speed_frac_max,
            T_C_IN_SETPOINT,
        );
        secondary_pid.preload_output(secondary.speed / c.secondary_pump.rated_speed);

        PlantState {
            sys,
            internals: PlantInternals {
                t_fuel,
                t_moderator: t_cool,
                sg_boundary_temp: sg_boundary,
                shock_envelope_exceeded: false,
                rod_pid,
                primary_pid,
                secondary_pid,
                n_cmd_primary: primary.speed,
                n_cmd_secondary: secondary.speed,
            },
        }
    }
}

/// Secondary-loop flow that closes the IHX balance at heat duty `q`.
fn solve_secondary_flow(q: f64, m_dot_c: f64, t_s_in: f64, c: &PlantConstants) -> f64 {
    let th = &c.thermal;
    let t_bar_p = 0.5 * (T_C_OUT_SETPOINT + T_C_IN_SETPOINT);
    let residual = |m: f64| {
        let t_out = t_s_in + q / (m * th.cp_secondary);
        let t_bar_s = 0.5 * (t_s_in + t_out);
        ua_ihx(m_dot_c, m, c) * (t_bar_p - t_bar_s) - q
    };
    let (mut lo, mut hi) = (50.0, 6000.0);
    // residual is increasing in m (more flow, colder secondary side, more duty)
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Flow-dependent IHX conductance [W/K].
fn ua_ihx(m_dot_c: f64, m_dot_s: f64, c: &PlantConstants) -> f64 {
    let th = &c.thermal;
    let rp = (m_dot_c / c.m_dot_primary_ref()).max(0.0);
    let rs = (m_dot_s / c.m_dot_secondary_ref()).max(0.0);
    th.ua_ihx_ref * 0.5 * (rp.powf(th.ua_flow_exponent) + rs.powf(th.ua_flow_exponent))
}

fn write_pressures(sys: &mut SystemState, dp_p: f64, dp_s: f64, pc: &PressureConstants) {
    sys[VarId::PCIn] = pc.base_primary + 0.95 * dp_p;
    sys[VarId::PCOut] = sys[VarId::PCIn] - 0.60 * dp_p;
    sys[VarId::PIhxPIn] = sys[VarId::PCOut] - 0.05 * dp_p;
    sys[VarId::PIhxPOut] = sys[VarId::PIhxPIn] - 0.25 * dp_p;
    sys[VarId::PIhxSIn] = pc.base_secondary + 0.95 * dp_s;
    sys[VarId::PIhxSOut] = sys[VarId::PIhxSIn] - 0.35 * dp_s;
    sys[VarId::PSgIn] = sys[VarId::PIhxSOut] - 0.05 * dp_s;
    sys[VarId::PSgOut] = sys[VarId::PSgIn] - 0.45 * dp_s;
}

/// Advance the plant one outer step of `dt` seconds toward `setpoint` [W]
/// with the given pump loss coefficients.
pub fn step_plant(
    state: &PlantState,
    setpoint: f64,
    dt: f64,
    k_p: f64,
    k_s: f64,
    c: &PlantConstants,
) -> Result<PlantState, PlantError> {
    if dt <= 0.0 {
        return Err(PlantError::InvalidTimeStep(dt));
    }
    if !(0.0..=FULL_POWER).contains(&setpoint) {
        return Err(PlantError::SetpointOutOfRange(setpoint));
    }
    if !state.sys.is_finite() {
        return Err(PlantError::NonFiniteState);
    }

    let mut refinement = 0usize;
    let mut substeps = c.substeps_per_step.max(1);
    loop {
        let next = integrate(state, setpoint, dt, k_p, k_s, substeps, c);
        if next.sys.is_finite() && next.internals.t_fuel.is_finite() {
            return Ok(next);
        }
        refinement += 1;
        if refinement > 4 {
            return Err(PlantError::NumericalBlowup(refinement - 1));
        }
        substeps *= 2;
    }
}

fn integrate(
    state: &PlantState,
    setpoint: f64,
    dt: f64,
    k_p: f64,
    k_s: f64,
    substeps: usize,
    c: &PlantConstants,
) -> PlantState {
    let mut st = state.clone();
    let th = &c.thermal;
    let h = dt / substeps as f64;

    // Controllers act on the outer grid.
    st.internals.rod_pid.setpoint = setpoint / FULL_POWER;
    let rod_rate = st
        .internals
        .rod_pid
        .step(st.sys[VarId::QDotRx] / FULL_POWER, dt)
        .clamp(-ROD_RATE_MAX, ROD_RATE_MAX);
    let s_p = st.internals.primary_pid.step(st.sys[VarId::TCOut], dt);
    let s_s = st.internals.secondary_pid.step(st.sys[VarId::TCIn], dt);
    st.internals.n_cmd_primary = s_p * c.primary_pump.rated_speed;
    st.internals.n_cmd_secondary = s_s * c.secondary_pump.rated_speed;

    let mut primary = PumpActuator::new(&c.primary_pump, k_p.max(K_COMMISSION));
    let mut secondary = PumpActuator::new(&c.secondary_pump, k_s.max(K_COMMISSION));
    primary.speed = st.sys[VarId::NP];
    secondary.speed = st.sys[VarId::NS];
    let r_p = c.primary_pump.loop_resistance();
    let r_s = c.secondary_pump.loop_resistance();

    for _ in 0..substeps {
        // Rod motion at the commanded (rate-limited) velocity.
        let z = (st.sys[VarId::ZCr] + rod_rate * h).clamp(c.rod.z_min, c.rod.z_max);
        st.sys[VarId::ZCr] = z;

        // Pump speed lags toward the command; flows follow the homologous
        // equilibrium against the loop resistance.
        primary.speed += (st.internals.n_cmd_primary - primary.speed) * h / c.primary_pump.tau_speed;
        secondary.speed +=
            (st.internals.n_cmd_secondary - secondary.speed) * h / c.secondary_pump.tau_speed;
        let v_p = primary.equilibrium_flow(r_p);
        let v_s = secondary.equilibrium_flow(r_s);
        let m_dot_c = th.rho_primary * v_p;
        let m_dot_s = th.rho_secondary * v_s;
        let dp_p = r_p * v_p * v_p;
        let dp_s = r_s * v_s * v_s;

        // Reactivity balance.
        let t_cool = 0.5 * (st.sys[VarId::TCIn] + st.sys[VarId::TCOut]);
        let rho_f = c.feedback.alpha_fuel * (st.internals.t_fuel - c.feedback.t_fuel_ref);
        let rho_c = c.feedback.alpha_coolant * (t_cool - c.feedback.t_coolant_ref);
        let rho_m = c.feedback.alpha_moderator * (st.internals.t_moderator - c.feedback.t_moderator_ref);
        let rho_cr = c.rod.worth_per_m * (z - c.rod.z_ref);
        let rho_xe = -st.sys[VarId::NXe];
        let rho = rho_f + rho_c + rho_m + rho_cr + rho_xe;

        // Point kinetics, backward Euler.
        let (power, precursors) = kinetics_be(
            st.sys[VarId::QDotRx],
            [
                st.sys[VarId::C1],
                st.sys[VarId::C2],
                st.sys[VarId::C3],
                st.sys[VarId::C4],
                st.sys[VarId::C5],
                st.sys[VarId::C6],
            ],
            rho,
            h,
            &c.kinetics,
        );
        st.sys[VarId::QDotRx] = power;
        for (i, ci) in precursors.iter().enumerate() {
            st.sys.0[VarId::C1.index() + i] = *ci;
        }

        // Iodine/xenon balance at the lagged power.
        let (n_i, n_xe, _) = crate::surrogate::xenon::xenon_update(
            st.sys[VarId::NI],
            st.sys[VarId::NXe],
            power,
            h,
            &c.xenon,
        );
        st.sys[VarId::NI] = n_i;
        st.sys[VarId::NXe] = n_xe;

        // Core thermal nodes.
        let q_fc = th.h_fuel_coolant * (st.internals.t_fuel - t_cool);
        st.internals.t_fuel += (power - q_fc) * h / th.fuel_heat_capacity;
        st.sys[VarId::TCOut] += (m_dot_c * th.cp_primary * (st.sys[VarId::TCIn] - st.sys[VarId::TCOut])
            + q_fc)
            * h
            / th.core_coolant_heat_capacity;
        st.internals.t_moderator += (t_cool - st.internals.t_moderator) * h / c.feedback.tau_moderator;

        // IHX.
        let t_bar_p = 0.5 * (st.sys[VarId::TIhxPIn] + st.sys[VarId::TIhxPOut]);
        let t_bar_s = 0.5 * (st.sys[VarId::TIhxSIn] + st.sys[VarId::TIhxSOut]);
        let q_hx = ua_ihx(m_dot_c, m_dot_s, c) * (t_bar_p - t_bar_s);
        st.sys[VarId::TIhxPOut] += (m_dot_c
            * th.cp_primary
            * (st.sys[VarId::TIhxPIn] - st.sys[VarId::TIhxPOut])
            - q_hx)
            * h
            / th.ihx_primary_heat_capacity;
        st.sys[VarId::TIhxSOut] += (m_dot_s
            * th.cp_secondary
            * (st.sys[VarId::TIhxSIn] - st.sys[VarId::TIhxSOut])
            + q_hx)
            * h
            / th.ihx_secondary_heat_capacity;

        // Transport legs and the SG boundary.
        st.sys[VarId::TIhxPIn] += (st.sys[VarId::TCOut] - st.sys[VarId::TIhxPIn]) * h / th.tau_hot_leg;
        st.sys[VarId::TCIn] += (st.sys[VarId::TIhxPOut] - st.sys[VarId::TCIn]) * h / th.tau_cold_leg;
        st.sys[VarId::TSgIn] += (st.sys[VarId::TIhxSOut] - st.sys[VarId::TSgIn]) * h / th.tau_sec_hot_leg;
        st.sys[VarId::TSgOut] +=
            (st.internals.sg_boundary_temp - st.sys[VarId::TSgOut]) * h / th.tau_sg_boundary;
        st.sys[VarId::TIhxSIn] += (st.sys[VarId::TSgOut] - st.sys[VarId::TIhxSIn]) * h / th.tau_sec_cold_leg;

        // Observable hydraulics and powers.
        st.sys[VarId::MDotC] = m_dot_c;
        st.sys[VarId::MDotS] = m_dot_s;
        st.sys[VarId::MDotSg] = m_dot_s;
        st.sys[VarId::MDotPP] = m_dot_c;
        st.sys[VarId::MDotPS] = m_dot_s;
        st.sys[VarId::NP] = primary.speed;
        st.sys[VarId::NS] = secondary.speed;
        st.sys[VarId::DpP] = dp_p;
        st.sys[VarId::DpS] = dp_s;
        write_pressures(&mut st.sys, dp_p, dp_s, &c.pressure);
        st.sys[VarId::QDotHx] = q_hx;
        st.sys[VarId::QDotSg] =
            m_dot_s * th.cp_secondary * (st.sys[VarId::TSgIn] - st.sys[VarId::TSgOut]);
        st.sys[VarId::RhoF] = rho_f;
        st.sys[VarId::RhoC] = rho_c;
        st.sys[VarId::RhoM] = rho_m;
        st.sys[VarId::RhoCr] = rho_cr;
    }

    st.sys[VarId::T] += dt;
    st
}

/// One backward-Euler kinetics substep: solve `(I - h A(rho)) x_new = x_old`
/// for the power/precursor vector.
fn kinetics_be(
    power: f64,
    precursors: [f64; 6],
    rho: f64,
    h: f64,
    k: &KineticsConstants,
) -> (f64, [f64; 6]) {
    let beta = k.beta_total();
    let mut a = SMatrix::<f64, 7, 7>::zeros();
    a[(0, 0)] = (rho - beta) / k.gen_time;
    for i in 0..6 {
        a[(0, 1 + i)] = k.lambda[i];
        a[(1 + i, 0)] = k.beta[i] / k.gen_time;
        a[(1 + i, 1 + i)] = -k.lambda[i];
    }
    let lhs = SMatrix::<f64, 7, 7>::identity() - a * h;
    let mut x = SVector::<f64, 7>::zeros();
    x[0] = power;
    for i in 0..6 {
        x[1 + i] = precursors[i];
    }
    let sol = lhs.lu().solve(&x).unwrap_or(x);
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = sol[1 + i];
    }
    (sol[0], out)
}

/// Sample the observed variables with zero-mean Gaussian noise of covariance
/// `gamma`. A zero covariance returns exact values.
pub fn measure<R: Rng + ?Sized>(
    state: &PlantState,
    observed: &[VarId],
    gamma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, PlantError> {
    if observed.is_empty() {
        return Err(PlantError::EmptyObservationSet);
    }
    let n = observed.len();
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(PlantError::GammaDimension {
            expected: n,
            rows: gamma.nrows(),
            cols: gamma.ncols(),
        });
    }
    let mut d = DVector::from_iterator(n, observed.iter().map(|id| state.sys[*id]));
    if gamma.iter().all(|x| *x == 0.0) {
        return Ok(d);
    }
    d += &sample_mvn(gamma, rng)?;
    Ok(d)
}

/// Draw one zero-mean sample with the given PSD covariance.
pub(crate) fn sample_mvn<R: Rng + ?Sized>(
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, PlantError> {
    let n = cov.nrows();
    let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
    if let Some(chol) = nalgebra::Cholesky::new(cov.clone()) {
        return Ok(chol.l() * z);
    }
    // PSD but singular: scale eigenvector directions, clamping tiny negative
    // eigenvalues from round-off.
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let tol = -1e-10 * eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|l| *l < tol) {
        return Err(PlantError::GammaNotPsd);
    }
    let scaled = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().zip(z.iter()).map(|(l, zi)| l.max(0.0).sqrt() * zi),
    );
    Ok(&eig.eigenvectors * scaled)
}

/// Measure by textual variable ids (config surface).
pub fn measure_by_name<R: Rng + ?Sized>(
    state: &PlantState,
    observed: &[String],
    gamma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>, PlantError> {
    let ids = observed
        .iter()
        .map(|n| VarId::from_name(n).ok_or_else(|| PlantError::UnknownVariable(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    measure(state, &ids, gamma, rng)
}

/// Outcome of a steam-generator shock injection.
#[derive(Debug, Clone)]
pub struct ShockOutcome {
    pub state: PlantState,
    /// True when |dT| exceeds the surrogate's trained envelope; the truth
    /// model still runs, surrogate validity is not guaranteed.
    pub envelope_exceeded: bool,
}

/// Set the SG exit / IHX-secondary-inlet boundary temperature to nominal + dT.
pub fn inject_sg_shock(state: &PlantState, delta_t: f64) -> ShockOutcome {
    let mut st = state.clone();
    st.internals.sg_boundary_temp = SG_EXIT_TEMP + delta_t;
    let exceeded = delta_t.abs() > SHOCK_ENVELOPE_K;
    st.internals.shock_envelope_exceeded = st.internals.shock_envelope_exceeded || exceeded;
    ShockOutcome {
        state: st,
        envelope_exceeded: exceeded,
    }
}

/// Reset a pump's loss coefficient to its commissioning value. Only legal
/// inside a shutdown window at a planning boundary.
pub fn apply_maintenance(
    pump: &PumpActuator,
    in_shutdown_window: bool,
) -> Result<PumpActuator, PlantError> {
    if !in_shutdown_window {
        return Err(PlantError::OutsideMaintenanceWindow);
    }
    let mut out = pump.clone();
    out.maintain();
    Ok(out)
}
