//! The closed-loop orchestrator.
//!
//! One logical control thread owns the loop. Each planning boundary the
//! Operator sets the month's hourly targets and books maintenance for the
//! following boundary; each setpoint interval the Reference Governor filters
//! the current target through the recalibrated surrogate; each measurement
//! interval (with its phase offset) the plant is sampled and the ensemble
//! assimilated; every base step the plant, the ensemble prediction, and both
//! pump-health trackers advance. Maintenance months are zero-power standby:
//! the plant is parked, assimilation and governing are suspended, and on
//! resume the surrogate lags and ensemble are re-anchored at the fresh
//! operating point.

use nalgebra::{DMatrix, DVector};

use crate::enkf::{
    assimilate_step, init_ensemble, AugmentedLayout, EnkfConfig, NoiseSpec, ObservationModel,
};
use crate::governor::{govern, GovernorConfig, GovernorError};
use crate::operator::{
    compress_surrogate, plan_period, CemPlanner, HourlyTransitionModel, OperatorPlan,
    PlanObservation, SamplingPlan,
};
use crate::plant::{
    inject_sg_shock, measure, step_plant, PlantConstants, PlantState, FULL_POWER,
};
use crate::pump::{pump_required_power, DegradationModel, PumpHealth, PumpHealthState, PumpSide};
use crate::seed::SeedTree;
use crate::sobol::{run_surrogate_study, SobolStudy};
use crate::state::VarId;
use crate::surrogate::{
    Checkpoint, CoefKind, ParamRef, PumpContext, SurrogateInput, SurrogateNet,
};

use super::config::{AlarmPolicy, ScenarioConfig, SurrogateVariant};
use super::log::{
    AssimilationRecord, Event, EventKind, GovernorRecord, PlanRecord, RunLog,
};
use super::prep::{prepare_original_net, prepare_shock_net};
use super::RuntimeError;

/// Everything assembled during the offline phase of a scenario.
pub struct PreparedScenario {
    pub consts: PlantConstants,
    pub net: SurrogateNet,
    pub theta_refs: Vec<ParamRef>,
    pub theta_labels: Vec<String>,
    pub study: SobolStudy,
    pub model: HourlyTransitionModel,
    pub deg_primary: DegradationModel,
    pub deg_secondary: DegradationModel,
    pub fit_reports: std::collections::BTreeMap<String, crate::surrogate::FitReport>,
}

/// Forced inclusions for the selection: the input-matrix coefficients that
/// map the exogenous inputs into the core-power prediction.
fn forced_power_input_refs(net: &SurrogateNet) -> Vec<ParamRef> {
    let mut out = Vec::new();
    for (bi, block) in net.blocks.iter().enumerate() {
        if let Some(row) = block.spec.vars.iter().position(|v| *v == VarId::QDotRx) {
            let n_u = block.params.n_u();
            // Skip the pinned time column; take the target column and the
            // first wired feed.
            for col in 1..n_u.min(3) {
                out.push(ParamRef {
                    block: bi,
                    kind: CoefKind::Input,
                    row,
                    col,
                });
            }
        }
    }
    out
}

/// Offline phase: fit (or load) the surrogate, select the assimilated
/// parameters via the sensitivity study, calibrate degradation, and compress
/// the virtual asset for planning.
pub fn prepare_scenario(config: &ScenarioConfig) -> Result<PreparedScenario, RuntimeError> {
    config.validate()?;
    let consts = match &config.constants_file {
        Some(path) => PlantConstants::from_toml_file(path)
            .map_err(|e| RuntimeError::Config(e.to_string()))?,
        None => PlantConstants::default(),
    };
    let seed = SeedTree::new(config.seed);

    let (net, fit_reports) = if let Some(ck_path) = &config.surrogate.checkpoint {
        let text = std::fs::read_to_string(ck_path).map_err(|e| RuntimeError::Io(e.to_string()))?;
        let ck = Checkpoint::from_json(&text).map_err(RuntimeError::Surrogate)?;
        (ck.net, ck.fit_reports)
    } else {
        match config.surrogate.variant {
            SurrogateVariant::Original => {
                prepare_original_net(&consts, &seed.child("fit"), config.surrogate.train_hours)?
            }
            SurrogateVariant::Shock => {
                prepare_shock_net(&consts, &seed.child("fit"), config.surrogate.train_hours)?
            }
        }
    };

    // Sensitivity study over the blocks that produce the observed core
    // power: the flows/pump-flow block and the powers block.
    let observed = config.enkf.observed_ids()?;
    let mut refs = Vec::new();
    for name in ["I", "II"] {
        if let Some(bi) = net.block_index(name) {
            refs.extend(net.point_coef_refs(bi));
        }
    }
    let study = run_surrogate_study(
        &net,
        &refs,
        &observed,
        0.5,
        config.sobol_selection.n,
        &consts,
        &seed.child("sobol"),
        config.enkf.parallel,
    )?;
    let forced: Vec<String> = if config.sobol_selection.force_power_input_coefficients {
        forced_power_input_refs(&net)
            .iter()
            .map(|r| r.label(&net))
            .collect()
    } else {
        Vec::new()
    };
    let theta_labels = study.select(config.sobol_selection.threshold, &forced)?;
    let theta_refs: Vec<ParamRef> = theta_labels
        .iter()
        .map(|l| net.parse_label(l))
        .collect::<Result<_, _>>()
        .map_err(RuntimeError::Surrogate)?;

    let mut deg_rng = seed.child("degradation-life").rng();
    let deg_primary = DegradationModel::new(
        config.pumps.primary.clone(),
        consts.primary_pump.rated_flow,
        &mut deg_rng,
    )?;
    let deg_secondary = DegradationModel::new(
        config.pumps.secondary.clone(),
        consts.secondary_pump.rated_flow,
        &mut deg_rng,
    )?;

    let model = compress_surrogate(
        &net,
        &deg_primary,
        &deg_secondary,
        &SamplingPlan::default(),
        &consts,
        config.enkf.parallel,
    )?;

    Ok(PreparedScenario {
        consts,
        net,
        theta_refs,
        theta_labels,
        study,
        model,
        deg_primary,
        deg_secondary,
        fit_reports,
    })
}

enum Mode {
    Running,
    Shutdown {
        primary: bool,
        secondary: bool,
        since_step: usize,
    },
}

/// Execute the closed loop and collect the full run log.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunLog, RuntimeError> {
    let prep = prepare_scenario(config)?;
    run_prepared(config, &prep)
}

/// Run with an already-prepared offline phase (demo comparisons reuse it).
pub fn run_prepared(
    config: &ScenarioConfig,
    prep: &PreparedScenario,
) -> Result<RunLog, RuntimeError> {
    let consts = &prep.consts;
    let ts = &config.timescales;
    let dt = ts.dt;
    let steps_per_hour = ts.steps_per_hour();
    let duration = config.duration_steps();
    let seed = SeedTree::new(config.seed);
    let demand_fracs = config.demand_fracs(&seed);
    let hours_per_month = (ts.delta_steps / steps_per_hour).max(1);

    let observed = config.enkf.observed_ids()?;
    let obs_model = ObservationModel::from_var_ids(&observed);
    let layout = AugmentedLayout {
        n_sys: crate::state::N_VARS,
        n_theta: prep.theta_refs.len(),
    };
    let gamma = DMatrix::from_diagonal(&DVector::from_vec(config.enkf.gamma_diag.clone()));
    let noise = NoiseSpec::uniform(
        &layout,
        config.enkf.sigma,
        config.enkf.sigma_theta,
        gamma.clone(),
        config.enkf.c0_state,
        config.enkf.c0_theta,
    )
    .with_zero_state_rows(&[VarId::T.index(), layout.n_sys + VarId::T.index()]);
    let enkf_cfg = EnkfConfig {
        parallel: config.enkf.parallel,
        ..EnkfConfig::default()
    };
    let governor_cfg = GovernorConfig::default();
    let constraints = config.constraints.constraint_set();

    // Mutable loop state.
    let mut net = prep.net.clone();
    let mut truth_k = (config.pumps.k0_primary, config.pumps.k0_secondary);
    let mut plant = PlantState::commissioning(config.start_frac, truth_k.0, truth_k.1, consts);
    let mut truth_health = PumpHealthState::new(0.0, truth_k.0, truth_k.1);
    let mut virt_health = truth_health;
    let mut prev_v_truth = (
        plant.sys[VarId::MDotPP] / consts.thermal.rho_primary,
        plant.sys[VarId::MDotPS] / consts.thermal.rho_secondary,
    );
    let mut prev_v_virt = prev_v_truth;

    let theta0 = net
        .theta(&prep.theta_refs)
        .map_err(RuntimeError::Surrogate)?;
    let filter0 = net.to_filter(&plant.sys);
    let mut ens = init_ensemble(
        filter0.as_slice(),
        filter0.as_slice(),
        &theta0,
        &noise,
        config.enkf.n_members,
        &seed.child("enkf-init"),
    )?;
    let enkf_seed = seed.child("enkf-run");
    let measure_seed = seed.child("measurement");
    let health_seed = seed.child("truth-health");

    let mut mode = Mode::Running;
    let mut pending_maintenance: Option<(bool, bool)> = None;
    let mut plan: Option<OperatorPlan> = None;
    let mut admissible = config.start_frac * FULL_POWER;
    let mut applied = admissible;
    let mut redraws_since_record = 0usize;
    let mut log = RunLog {
        name: config.name.clone(),
        seed: config.seed,
        decimation_steps: config.output.decimation_steps,
        dt,
        theta_labels: prep.theta_labels.clone(),
        ..RunLog::default()
    };

    // Shock schedule by step index.
    let shock_steps: Vec<(usize, f64)> = config
        .shocks
        .iter()
        .map(|s| ((s.at_hours * 3600.0 / dt).round() as usize, s.delta_t_kelvin))
        .collect();

    let demand_at = |hour: usize| -> f64 {
        demand_fracs[hour.min(demand_fracs.len().saturating_sub(1))]
    };

    for k in 0..duration {
        let t = k as f64 * dt;
        let hour = k / steps_per_hour;
        let month = k / ts.delta_steps;
        let hour_in_month = (k % ts.delta_steps) / steps_per_hour;

        // Planning boundary.
        if k % ts.delta_steps == 0 {
            let finish_shutdown = matches!(mode, Mode::Shutdown { since_step, .. }
                if k >= since_step + ts.delta_steps);
            if finish_shutdown {
                if let Mode::Shutdown {
                    primary, secondary, ..
                } = mode
                {
                    if primary {
                        truth_k.0 = crate::pump::K_COMMISSION;
                        truth_health.primary = PumpHealth::fresh();
                        virt_health.primary = PumpHealth::fresh();
                    }
                    if secondary {
                        truth_k.1 = crate::pump::K_COMMISSION;
                        truth_health.secondary = PumpHealth::fresh();
                        virt_health.secondary = PumpHealth::fresh();
                    }
                    log.events.push(Event {
                        t,
                        kind: EventKind::MaintenanceComplete { primary, secondary },
                    });
                }
                mode = Mode::Running;
            }

            if matches!(mode, Mode::Running) {
                if let Some((mp, ms)) = pending_maintenance.take() {
                    // A maintenance booked at the previous boundary starts
                    // its shutdown month now.
                    mode = Mode::Shutdown {
                        primary: mp,
                        secondary: ms,
                        since_step: k,
                    };
                    applied = 0.0;
                    log.events.push(Event {
                        t,
                        kind: EventKind::ShutdownStart,
                    });
                } else {
                    // Plan the month ahead.
                    let month_demand: Vec<f64> = (0..hours_per_month)
                        .map(|h| demand_at(hour + h))
                        .collect();
                    let plan_obs = PlanObservation {
                        demand_fracs: &month_demand,
                        start_power_frac: (plant.sys[VarId::QDotRx] / FULL_POWER).clamp(0.0, 1.1),
                        health: virt_health,
                        model: &prep.model,
                        weights: &config.operator.weights,
                        config: &config.operator.planner,
                        seed: seed.child("operator").index(month as u64),
                        parallel: config.enkf.parallel,
                    };
                    let new_plan = plan_period(&plan_obs, &mut CemPlanner)?;
                    if new_plan.maintain_primary_next || new_plan.maintain_secondary_next {
                        pending_maintenance = Some((
                            new_plan.maintain_primary_next,
                            new_plan.maintain_secondary_next,
                        ));
                        log.events.push(Event {
                            t,
                            kind: EventKind::MaintenanceScheduled {
                                primary: new_plan.maintain_primary_next,
                                secondary: new_plan.maintain_secondary_next,
                            },
                        });
                    }
                    log.plans.push(PlanRecord {
                        t,
                        month_index: month,
                        plan: new_plan.clone(),
                    });
                    // Resuming from standby: re-anchor the plant, surrogate
                    // lags, and ensemble at the fresh operating point.
                    if plant.sys[VarId::QDotRx] == 0.0 || applied == 0.0 {
                        let first_frac =
                            (new_plan.hourly_targets[0] / FULL_POWER).clamp(0.5, 1.0);
                        plant =
                            PlantState::commissioning(first_frac, truth_k.0, truth_k.1, consts);
                        let mut sys = plant.sys;
                        sys[VarId::T] = t;
                        plant.sys = sys;
                        let f = net.to_filter(&plant.sys);
                        let theta_now =
                            net.theta(&prep.theta_refs).map_err(RuntimeError::Surrogate)?;
                        ens = init_ensemble(
                            f.as_slice(),
                            f.as_slice(),
                            &theta_now,
                            &noise,
                            config.enkf.n_members,
                            &seed.child("enkf-resume").index(month as u64),
                        )?;
                        prev_v_truth = (
                            plant.sys[VarId::MDotPP] / consts.thermal.rho_primary,
                            plant.sys[VarId::MDotPS] / consts.thermal.rho_secondary,
                        );
                        prev_v_virt = prev_v_truth;
                        admissible = new_plan.hourly_targets[0];
                        applied = admissible;
                        log.events.push(Event {
                            t,
                            kind: EventKind::Resume,
                        });
                    }
                    plan = Some(new_plan);
                }
            }
        }

        // Standby month: the plant is parked; only time advances.
        if let Mode::Shutdown { .. } = mode {
            if k % config.output.decimation_steps == 0 {
                let mut standby = plant.sys;
                standby[VarId::T] = t + dt;
                standby[VarId::QDotRx] = 0.0;
                standby[VarId::QDotHx] = 0.0;
                standby[VarId::QDotSg] = 0.0;
                for v in [VarId::MDotC, VarId::MDotS, VarId::MDotSg, VarId::MDotPP, VarId::MDotPS, VarId::NP, VarId::NS, VarId::DpP, VarId::DpS] {
                    standby[v] = 0.0;
                }
                truth_health.t = t + dt;
                virt_health.t = t + dt;
                log.truth.push(standby);
                log.virtual_mean.push(standby);
                log.applied_setpoint.push(0.0);
                log.demand.push(demand_at(hour) * FULL_POWER);
                log.truth_health.push(truth_health);
                log.virtual_health.push(virt_health);
            }
            continue;
        }

        // Boundary-condition shocks.
        for (at, delta) in &shock_steps {
            if *at == k {
                let outcome = inject_sg_shock(&plant, *delta);
                plant = outcome.state;
                log.events.push(Event {
                    t,
                    kind: EventKind::ShockInjected {
                        delta_t: *delta,
                        envelope_exceeded: outcome.envelope_exceeded,
                    },
                });
            }
        }

        // Setpoint boundary: govern the current hourly target.
        if k % ts.gamma_steps == 0 {
            let target = plan
                .as_ref()
                .map(|p| p.hourly_targets[hour_in_month.min(p.hourly_targets.len() - 1)])
                .unwrap_or(admissible);
            let lag1 = ens.mean_system_state(&net);
            let lag2 = ens.mean_prev_state(&net);
            let pumps = PumpContext {
                k_p: virt_health.primary.k,
                k_s: virt_health.secondary.k,
            };
            match govern(
                target,
                admissible,
                &net,
                &lag2,
                &lag1,
                &pumps,
                &constraints,
                &governor_cfg,
            ) {
                Ok(decision) => {
                    admissible = decision.admissible;
                    applied = admissible;
                    log.governor.push(GovernorRecord {
                        t,
                        target,
                        admissible: decision.admissible,
                        kappa: decision.kappa,
                        binding: decision.binding.map(|v| v.name().to_string()),
                        applied,
                    });
                }
                Err(GovernorError::PreviousInfeasible { var, excess, step }) => {
                    log.events.push(Event {
                        t,
                        kind: EventKind::GovernorAlarm {
                            detail: format!(
                                "previous setpoint predicted infeasible: {var} by {excess:.3e} at step {step}"
                            ),
                        },
                    });
                    log.governor.push(GovernorRecord {
                        t,
                        target,
                        admissible,
                        kappa: 0.0,
                        binding: Some(var.to_string()),
                        applied,
                    });
                    if config.alarm_policy == AlarmPolicy::Halt {
                        log.events.push(Event {
                            t,
                            kind: EventKind::Halted {
                                detail: "governor alarm".into(),
                            },
                        });
                        break;
                    }
                }
                Err(e) => return Err(RuntimeError::Governor(e.to_string())),
            }
        }

        // Plant step with the truth-side loss coefficients.
        plant = step_plant(&plant, applied, dt, truth_k.0, truth_k.1, consts)?;

        // Truth-side degradation with its per-step noise stream.
        {
            let mut rng = health_seed.index(k as u64).rng();
            let (hp, vp) = crate::pump::update_pump_health(
                &truth_health.primary,
                &prep.deg_primary,
                &plant.sys,
                PumpSide::Primary,
                prev_v_truth.0,
                consts,
                &mut rng,
            )?;
            let (hs, vs) = crate::pump::update_pump_health(
                &truth_health.secondary,
                &prep.deg_secondary,
                &plant.sys,
                PumpSide::Secondary,
                prev_v_truth.1,
                consts,
                &mut rng,
            )?;
            truth_health = PumpHealthState {
                t: plant.sys[VarId::T],
                primary: hp,
                secondary: hs,
            };
            prev_v_truth = (vp, vs);
            truth_k = (hp.k, hs.k);
        }

        // Measurement on the beta cadence (phase-offset inside the interval).
        let d_raw = if k % ts.beta_steps == ts.beta_offset_steps {
            let mut rng = measure_seed.index(k as u64).rng();
            Some(
                measure(&plant, &observed, &gamma, &mut rng)
                    .map_err(|e| RuntimeError::Plant(e.to_string()))?,
            )
        } else {
            None
        };

        // Ensemble prediction every step; update when a measurement arrived.
        let u = SurrogateInput {
            t: plant.sys[VarId::T],
            target_power: applied,
        };
        let pumps = PumpContext {
            k_p: virt_health.primary.k,
            k_s: virt_health.secondary.k,
        };
        let outcome = assimilate_step(
            &mut ens,
            &mut net,
            &prep.theta_refs,
            &u,
            &pumps,
            d_raw.as_ref(),
            &obs_model,
            &noise,
            k as u64,
            &enkf_seed,
            &enkf_cfg,
        )?;
        redraws_since_record += outcome.predict_events.diverged.len();
        if let Some(stats) = outcome.update_stats {
            let variances = ens.row_variances();
            let observed_variance: Vec<f64> = obs_model
                .observed
                .iter()
                .map(|vi| variances[ens.layout.curr_row(*vi)])
                .collect();
            let theta_variance: Vec<f64> = (0..ens.layout.n_theta)
                .map(|i| variances[ens.layout.theta_offset() + i])
                .collect();
            if redraws_since_record > 0 {
                log.events.push(Event {
                    t,
                    kind: EventKind::MembersRedrawn {
                        count: redraws_since_record,
                    },
                });
            }
            log.assimilation.push(AssimilationRecord {
                t: plant.sys[VarId::T],
                measurement: d_raw.map(|d| d.as_slice().to_vec()).unwrap_or_default(),
                pre_distance: stats.pre_distance,
                post_distance: stats.post_distance,
                observed_variance,
                theta_mean: outcome.theta_mean.as_slice().to_vec(),
                theta_variance,
                diverged_members: redraws_since_record,
            });
            redraws_since_record = 0;
        }

        // Virtual-side degradation from the assimilated mean state
        // (deterministic expected increments).
        {
            let mean_state = ens.mean_system_state(&net);
            let vp = (mean_state[VarId::MDotPP] / consts.thermal.rho_primary).max(0.0);
            let vs = (mean_state[VarId::MDotPS] / consts.thermal.rho_secondary).max(0.0);
            let kp = virt_health.primary.k
                + prep.deg_primary.expected_increment(vp, vp - prev_v_virt.0);
            let ks = virt_health.secondary.k
                + prep.deg_secondary.expected_increment(vs, vs - prev_v_virt.1);
            prev_v_virt = (vp, vs);
            let (qp, qpd) = pump_required_power(&mean_state, PumpSide::Primary, kp, consts);
            let (qs, qsd) = pump_required_power(&mean_state, PumpSide::Secondary, ks, consts);
            virt_health = PumpHealthState {
                t: mean_state[VarId::T],
                primary: PumpHealth {
                    q_required_degraded: qpd,
                    q_required: qp,
                    k: kp,
                    eta: crate::pump::health_index(kp),
                },
                secondary: PumpHealth {
                    q_required_degraded: qsd,
                    q_required: qs,
                    k: ks,
                    eta: crate::pump::health_index(ks),
                },
            };
        }

        if k % config.output.decimation_steps == 0 {
            log.truth.push(plant.sys);
            log.virtual_mean.push(ens.mean_system_state(&net));
            log.applied_setpoint.push(applied);
            log.demand.push(demand_at(hour) * FULL_POWER);
            log.truth_health.push(truth_health);
            log.virtual_health.push(virt_health);
        }
    }

    log.check_invariants()?;
    Ok(log)
}
