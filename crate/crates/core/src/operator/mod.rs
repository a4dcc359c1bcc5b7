//! Health-aware supervisory planner.
//!
//! The fine-timescale virtual asset is compressed into an hourly transition
//! model (target power, start-of-hour power, pump loss coefficients in; end
//! power, updated coefficients, transition score out). Each planning period
//! a cross-entropy search over target shaping and per-period maintenance
//! flags maximizes a reward balancing demand tracking, transition stress,
//! maintenance cost, degradation operating cost, and a dominating
//! health-violation penalty, rolled out on the compressed model over the
//! reasoning horizon. The agent interface is a plain observe/propose
//! contract, so a learned policy can replace the built-in planner.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::plant::{PlantState, FULL_POWER, MIN_POWER_FRAC};
use crate::pump::{health_index, DegradationModel, PumpHealthState, K_COMMISSION};
use crate::seed::SeedTree;
use crate::state::VarId;
use crate::surrogate::{PumpContext, SurrogateError, SurrogateInput, SurrogateNet};

pub const HOURS_PER_MONTH: usize = 720;
const STEPS_PER_HOUR: usize = 720;

/// Reference step size of the transition score: the one-minute slew quantum
/// (5% of full power).
pub const SCORE_REFERENCE_STEP: f64 = 14.0e6;

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error("sampling plan does not cover the operating box: {0}")]
    InsufficientCoverage(String),
    #[error("demand profile is empty")]
    EmptyDemand,
    #[error("invalid reward weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Pump(#[from] crate::pump::PumpError),
}

/// Bounded measure of how stressful a power step is: one at zero step,
/// monotonically non-increasing in the step size.
pub fn transition_score(start: f64, target: f64) -> f64 {
    (-(target - start).abs() / SCORE_REFERENCE_STEP).exp()
}

/// One fine-scale hour: roll the surrogate for an hour at a held target with
/// deterministic pump degradation accumulating along the predicted flows.
/// Returns (end power fraction, primary dK, secondary dK).
#[allow(clippy::too_many_arguments)]
pub fn fine_scale_hour(
    net: &SurrogateNet,
    start_frac: f64,
    target_frac: f64,
    k_p: f64,
    k_s: f64,
    primary: &DegradationModel,
    secondary: &DegradationModel,
    consts: &crate::plant::PlantConstants,
) -> Result<(f64, f64, f64), SurrogateError> {
    let anchor = PlantState::commissioning(start_frac.clamp(0.5, 1.0), k_p, k_s, consts).sys;
    let mut lag2 = anchor;
    let mut lag1 = anchor;
    let mut kp = k_p;
    let mut ks = k_s;
    let mut prev_vp = anchor[VarId::MDotPP] / consts.thermal.rho_primary;
    let mut prev_vs = anchor[VarId::MDotPS] / consts.thermal.rho_secondary;
    for _ in 0..STEPS_PER_HOUR {
        let u = SurrogateInput {
            t: lag1[VarId::T],
            target_power: target_frac * FULL_POWER,
        };
        let pumps = PumpContext { k_p: kp, k_s: ks };
        let next = net.eval_step_with(&lag2, &lag1, &u, &pumps, &[])?;
        let vp = next[VarId::MDotPP] / consts.thermal.rho_primary;
        let vs = next[VarId::MDotPS] / consts.thermal.rho_secondary;
        kp += primary.expected_increment(vp, vp - prev_vp);
        ks += secondary.expected_increment(vs, vs - prev_vs);
        prev_vp = vp;
        prev_vs = vs;
        lag2 = lag1;
        lag1 = next;
    }
    Ok((lag1[VarId::QDotRx] / FULL_POWER, kp - k_p, ks - k_s))
}

/// Declared sampling plan of the compression fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub start_fracs: Vec<f64>,
    pub target_fracs: Vec<f64>,
    pub k_levels: Vec<f64>,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            start_fracs: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            target_fracs: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            k_levels: vec![1.0, 1.5, 2.2, 3.0],
        }
    }
}

impl SamplingPlan {
    fn validate(&self) -> Result<(), OperatorError> {
        let span = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(*x), hi.max(*x))
                })
        };
        let (slo, shi) = span(&self.start_fracs);
        let (tlo, thi) = span(&self.target_fracs);
        let (_, khi) = span(&self.k_levels);
        if slo > 0.55 || shi < 0.95 || tlo > 0.55 || thi < 0.95 {
            return Err(OperatorError::InsufficientCoverage(
                "power box must span the 50-100% band".into(),
            ));
        }
        if khi < 2.5 {
            return Err(OperatorError::InsufficientCoverage(
                "loss-coefficient levels must reach the health floor".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionReport {
    /// Held-out RMSE per output: end power fraction, primary dK, secondary dK.
    pub rmse_holdout: [f64; 3],
    pub n_samples: usize,
    pub n_holdout: usize,
    /// Compressed-model evaluations per second, measured after the fit.
    pub evals_per_second: f64,
}

/// Hourly transition model: quadratic ridge regressor over
/// (start power, target power, K_p, K_s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourlyTransitionModel {
    /// Coefficients per output over the feature vector.
    coefs: Vec<Vec<f64>>,
    pub report: CompressionReport,
}

#[derive(Debug, Clone, Copy)]
pub struct HourlyOutcome {
    pub end_frac: f64,
    pub k_p: f64,
    pub k_s: f64,
    pub score: f64,
}

fn features(start: f64, target: f64, k_p: f64, k_s: f64) -> [f64; 10] {
    [
        1.0,
        start,
        target,
        start * start,
        target * target,
        start * target,
        (target - start).abs(),
        k_p - 1.0,
        k_s - 1.0,
        (target - start).abs() * (target + start),
    ]
}

impl HourlyTransitionModel {
    /// Predict one hour. Loss coefficients never decrease.
    pub fn predict(&self, start_frac: f64, target_frac: f64, k_p: f64, k_s: f64) -> HourlyOutcome {
        let f = features(start_frac, target_frac, k_p, k_s);
        let eval = |coefs: &[f64]| -> f64 { coefs.iter().zip(f).map(|(c, x)| c * x).sum() };
        let end = eval(&self.coefs[0]).clamp(0.0, 1.05);
        let dkp = eval(&self.coefs[1]).max(0.0);
        let dks = eval(&self.coefs[2]).max(0.0);
        HourlyOutcome {
            end_frac: end,
            k_p: k_p + dkp,
            k_s: k_s + dks,
            score: transition_score(start_frac * FULL_POWER, target_frac * FULL_POWER),
        }
    }
}

/// Fit the hourly transition model on fine-scale surrogate + pump-health
/// rollouts over the sampling plan.
pub fn compress_surrogate(
    net: &SurrogateNet,
    primary: &DegradationModel,
    secondary: &DegradationModel,
    plan: &SamplingPlan,
    consts: &crate::plant::PlantConstants,
    parallel: bool,
) -> Result<HourlyTransitionModel, OperatorError> {
    plan.validate()?;
    let mut cases = Vec::new();
    for s in &plan.start_fracs {
        for g in &plan.target_fracs {
            for k in &plan.k_levels {
                cases.push((*s, *g, *k, *k));
            }
        }
    }
    type SampleRow = Result<([f64; 10], [f64; 3]), SurrogateError>;
    let rows: Vec<SampleRow> = exec::map_indexed(cases.len(), parallel, |i| {
            let (s, g, kp, ks) = cases[i];
            let (end, dkp, dks) = fine_scale_hour(net, s, g, kp, ks, primary, secondary, consts)?;
            Ok((features(s, g, kp, ks), [end, dkp, dks]))
        });
    let rows: Vec<([f64; 10], [f64; 3])> = rows.into_iter().collect::<Result<_, _>>()?;

    // Every fifth sample is held out for the fit report.
    let holdout: Vec<usize> = (0..rows.len()).filter(|i| i % 5 == 4).collect();
    let train: Vec<usize> = (0..rows.len()).filter(|i| i % 5 != 4).collect();

    let nf = 10;
    let mut coefs = Vec::with_capacity(3);
    for out in 0..3 {
        let mut gram = vec![0.0; nf * nf];
        let mut rhs = vec![0.0; nf];
        for &i in &train {
            let (f, y) = &rows[i];
            for a in 0..nf {
                for b in 0..nf {
                    gram[a * nf + b] += f[a] * f[b];
                }
                rhs[a] += f[a] * y[out];
            }
        }
        let ridge = 1e-8 * gram.iter().step_by(nf + 1).fold(0.0f64, |m, v| m.max(*v));
        let mut gm = nalgebra::DMatrix::from_row_slice(nf, nf, &gram);
        for a in 0..nf {
            gm[(a, a)] += ridge.max(1e-12);
        }
        let rv = nalgebra::DVector::from_vec(rhs);
        let sol = gm.lu().solve(&rv).ok_or_else(|| {
            OperatorError::InsufficientCoverage("singular compression fit".into())
        })?;
        coefs.push(sol.as_slice().to_vec());
    }

    let mut rmse = [0.0f64; 3];
    for &i in &holdout {
        let (f, y) = &rows[i];
        for out in 0..3 {
            let pred: f64 = coefs[out].iter().zip(f.iter()).map(|(c, x)| c * x).sum();
            rmse[out] += (pred - y[out]).powi(2);
        }
    }
    for r in rmse.iter_mut() {
        *r = (*r / holdout.len().max(1) as f64).sqrt();
    }

    let mut model = HourlyTransitionModel {
        coefs,
        report: CompressionReport {
            rmse_holdout: rmse,
            n_samples: rows.len(),
            n_holdout: holdout.len(),
            evals_per_second: 0.0,
        },
    };
    // Record evaluation throughput (the point of compressing).
    let start = Instant::now();
    let reps = 200_000usize;
    let mut acc = 0.0;
    for i in 0..reps {
        let s = 0.5 + 0.5 * ((i % 97) as f64 / 97.0);
        acc += model.predict(s, 1.0 - 0.4 * s, 1.1, 1.2).end_frac;
    }
    let dt = start.elapsed().as_secs_f64();
    std::hint::black_box(acc);
    model.report.evals_per_second = reps as f64 / dt.max(1e-9);
    Ok(model)
}

/// Reward weights. The health-violation penalty dominates lexicographically
/// through its magnitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardWeights {
    pub tracking: f64,
    pub transition: f64,
    pub maintenance_cost: f64,
    pub health_penalty: f64,
    /// Operating cost of carrying degraded pumps (excess required pump power
    /// grows with K).
    pub degradation_cost: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            tracking: 1.0,
            transition: 0.1,
            maintenance_cost: 0.25,
            health_penalty: 1e3,
            degradation_cost: 4.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let all = [
            self.tracking,
            self.transition,
            self.maintenance_cost,
            self.health_penalty,
            self.degradation_cost,
        ];
        if all.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(OperatorError::InvalidWeights("weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Planner configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Reasoning horizon in months (planning applies one month).
    pub reasoning_months: usize,
    /// CEM population per iteration.
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            reasoning_months: 3,
            population: 48,
            elites: 8,
            iterations: 12,
        }
    }
}

/// Everything the planner observes at a planning boundary.
pub struct PlanObservation<'a> {
    /// Demand for the applied period, hourly, as power fractions.
    pub demand_fracs: &'a [f64],
    pub start_power_frac: f64,
    pub health: PumpHealthState,
    pub model: &'a HourlyTransitionModel,
    pub weights: &'a RewardWeights,
    pub config: &'a PlannerConfig,
    pub seed: SeedTree,
    pub parallel: bool,
}

/// Decisions for one period: hourly targets now, maintenance at the next
/// boundary (maintenance needs one period of notice).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanProposal {
    pub hourly_target_fracs: Vec<f64>,
    pub maintain_primary_next: bool,
    pub maintain_secondary_next: bool,
}

/// Expected reward breakdown of the adopted plan (per-hour means over the
/// reasoning horizon; costs enter negative).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tracking: f64,
    pub transition: f64,
    pub maintenance: f64,
    pub degradation: f64,
    pub health_penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorPlan {
    /// Hourly targets for the applied period [W].
    pub hourly_targets: Vec<f64>,
    pub maintain_primary_next: bool,
    pub maintain_secondary_next: bool,
    pub expected: RewardBreakdown,
    /// Minimum predicted health index over the reasoning horizon.
    pub predicted_min_eta: f64,
    /// Set when the agent failed and the demand-passthrough fallback ran.
    pub fallback: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("agent failure: {0}")]
pub struct AgentError(pub String);

/// Abstract policy interface: observe the compressed state, emit hourly
/// targets plus maintenance flags. A learned agent is a drop-in here.
pub trait PolicyAgent {
    fn propose(&mut self, obs: &PlanObservation<'_>) -> Result<PlanProposal, AgentError>;
}

/// Maintenance guard: maintain whenever the predicted health index touches
/// the floor (closed threshold) anywhere in the rollout.
pub fn maintenance_guard(eta_trajectory: &[f64]) -> bool {
    eta_trajectory.iter().any(|eta| *eta <= 0.2)
}

/// Decision vector: shaping (smooth, scale, offset) plus one maintenance
/// logit per pump per reasoning month.
struct DecisionSpace {
    months: usize,
}

impl DecisionSpace {
    fn dim(&self) -> usize {
        3 + 2 * self.months
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, 0.9), (0.9, 1.1), (-0.05, 0.05)];
        b.extend(std::iter::repeat_n((0.0, 1.0), 2 * self.months));
        b
    }
}

pub(crate) struct Rollout {
    pub reward: RewardBreakdown,
    pub min_eta: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub end_k: (f64, f64),
}

/// Deterministic rollout of one decision vector on the compressed model.
/// Maintenance decided for boundary m is applied during month m+1 as a
/// shutdown block with the flagged pumps reset at its end.
pub(crate) fn rollout_decision(
    x: &[f64],
    obs: &PlanObservation<'_>,
    months: usize,
) -> (Rollout, Vec<f64>, [bool; 2]) {
    let (smooth, scale, offset) = (x[0], x[1], x[2]);
    let maintain_flags: Vec<(bool, bool)> = (0..months)
        .map(|m| (x[3 + 2 * m] > 0.5, x[4 + 2 * m] > 0.5))
        .collect();

    let hours_applied = obs.demand_fracs.len();
    let total_hours = hours_applied * months;
    let demand_at = |h: usize| obs.demand_fracs[h % hours_applied];

    let mut power = obs.start_power_frac;
    let mut k_p = obs.health.primary.k;
    let mut k_s = obs.health.secondary.k;
    let mut smoothed = power;
    let mut tracking = 0.0;
    let mut transition = 0.0;
    let mut degradation = 0.0;
    let mut maintenance = 0.0;
    let mut min_eta = health_index(k_p.max(k_s));
    let mut first_month_targets = Vec::with_capacity(hours_applied);

    for m in 0..months {
        let shutdown = m >= 1 && (maintain_flags[m - 1].0 || maintain_flags[m - 1].1);
        if shutdown {
            let (mp, ms) = maintain_flags[m - 1];
            maintenance += obs.weights.maintenance_cost
                * ((mp as u8 + ms as u8) as f64)
                * hours_applied as f64;
            for h in 0..hours_applied {
                tracking += demand_at(h).abs();
            }
            if mp {
                k_p = K_COMMISSION;
            }
            if ms {
                k_s = K_COMMISSION;
            }
            power = demand_at(0).clamp(MIN_POWER_FRAC, 1.0);
            smoothed = power;
            continue;
        }
        for h in 0..hours_applied {
            let raw = (scale * demand_at(h) + offset).clamp(MIN_POWER_FRAC, 1.0);
            smoothed = smooth * smoothed + (1.0 - smooth) * raw;
            let target = smoothed.clamp(MIN_POWER_FRAC, 1.0);
            if m == 0 {
                first_month_targets.push(target);
            }
            let out = obs.model.predict(power, target, k_p, k_s);
            tracking += (out.end_frac - demand_at(h)).abs();
            transition += out.score;
            degradation += (k_p - K_COMMISSION) + (k_s - K_COMMISSION);
            k_p = out.k_p;
            k_s = out.k_s;
            power = out.end_frac;
            min_eta = min_eta.min(health_index(k_p)).min(health_index(k_s));
        }
    }

    let n = total_hours.max(1) as f64;
    let tracking_term = -obs.weights.tracking * tracking / n;
    let transition_term = obs.weights.transition * transition / n;
    let maintenance_term = -maintenance / n;
    let degradation_term = -obs.weights.degradation_cost * degradation / n;
    let health_penalty = if min_eta <= 0.2 {
        -obs.weights.health_penalty
    } else {
        0.0
    };
    let total =
        tracking_term + transition_term + maintenance_term + degradation_term + health_penalty;
    (
        Rollout {
            reward: RewardBreakdown {
                tracking: tracking_term,
                transition: transition_term,
                maintenance: maintenance_term,
                degradation: degradation_term,
                health_penalty,
                total,
            },
            min_eta,
            end_k: (k_p, k_s),
        },
        first_month_targets,
        [maintain_flags[0].0, maintain_flags[0].1],
    )
}

/// Cross-entropy search over the decision space.
fn cem_search(obs: &PlanObservation<'_>) -> Vec<f64> {
    let months = obs.config.reasoning_months.max(1);
    let space = DecisionSpace { months };
    let bounds = space.bounds();
    let dim = space.dim();
    let mut mean: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut std: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.4 * (hi - lo)).collect();
    let pop = obs.config.population.max(8);
    let elites = obs.config.elites.clamp(2, pop / 2);

    let mut best_x = mean.clone();
    let mut best_reward = rollout_decision(&best_x, obs, months).0.reward.total;

    for iter in 0..obs.config.iterations {
        let iter_seed = obs.seed.child("cem").index(iter as u64);
        let candidates: Vec<Vec<f64>> = exec::map_indexed(pop, obs.parallel, |j| {
            let mut rng = iter_seed.index(j as u64).rng();
            (0..dim)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mean[i] + std[i] * z).clamp(bounds[i].0, bounds[i].1)
                })
                .collect()
        });
        let mut scored: Vec<(f64, usize)> = exec::map_indexed(pop, obs.parallel, |j| {
            rollout_decision(&candidates[j], obs, months).0.reward.total
        })
        .into_iter()
        .enumerate()
        .map(|(j, r)| (r, j))
        .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        if scored[0].0 > best_reward {
            best_reward = scored[0].0;
            best_x = candidates[scored[0].1].clone();
        }
        let elite_idx: Vec<usize> = scored.iter().take(elites).map(|(_, j)| *j).collect();
        for i in 0..dim {
            let m: f64 =
                elite_idx.iter().map(|&j| candidates[j][i]).sum::<f64>() / elites as f64;
            let v: f64 = elite_idx
                .iter()
                .map(|&j| (candidates[j][i] - m).powi(2))
                .sum::<f64>()
                / elites as f64;
            mean[i] = m;
            std[i] = v.sqrt().max(1e-3 * (bounds[i].1 - bounds[i].0));
        }
    }
    best_x
}

/// Built-in derivative-free planner.
pub struct CemPlanner;

impl PolicyAgent for CemPlanner {
    fn propose(&mut self, obs: &PlanObservation<'_>) -> Result<PlanProposal, AgentError> {
        let months = obs.config.reasoning_months.max(1);
        let best_x = cem_search(obs);
        let (_, targets, flags) = rollout_decision(&best_x, obs, months);
        Ok(PlanProposal {
            hourly_target_fracs: targets,
            maintain_primary_next: flags[0],
            maintain_secondary_next: flags[1],
        })
    }
}

/// Plan one period: run the agent (falling back to demand passthrough on
/// failure), then force maintenance whenever the no-maintenance rollout
/// breaches the health floor inside the window this decision protects.
pub fn plan_period(
    obs: &PlanObservation<'_>,
    agent: &mut dyn PolicyAgent,
) -> Result<OperatorPlan, OperatorError> {
    if obs.demand_fracs.is_empty() {
        return Err(OperatorError::EmptyDemand);
    }
    obs.weights.validate()?;
    let months = obs.config.reasoning_months.max(1);

    let (proposal, fallback) = match agent.propose(obs) {
        Ok(p) if p.hourly_target_fracs.len() == obs.demand_fracs.len() => (p, false),
        _ => (
            PlanProposal {
                hourly_target_fracs: obs
                    .demand_fracs
                    .iter()
                    .map(|d| d.clamp(MIN_POWER_FRAC, 1.0))
                    .collect(),
                maintain_primary_next: false,
                maintain_secondary_next: false,
            },
            true,
        ),
    };

    // Guard: eta trajectory of the no-maintenance rollout over the coming
    // two periods (the window only this decision's maintenance can protect).
    let guard_window = 2 * obs.demand_fracs.len();
    let mut power = obs.start_power_frac;
    let mut k_p = obs.health.primary.k;
    let mut k_s = obs.health.secondary.k;
    let mut eta_p = Vec::with_capacity(guard_window);
    let mut eta_s = Vec::with_capacity(guard_window);
    for h in 0..guard_window {
        let d = obs.demand_fracs[h % obs.demand_fracs.len()].clamp(MIN_POWER_FRAC, 1.0);
        let out = obs.model.predict(power, d, k_p, k_s);
        k_p = out.k_p;
        k_s = out.k_s;
        power = out.end_frac;
        eta_p.push(health_index(k_p));
        eta_s.push(health_index(k_s));
    }
    let maintain_p = proposal.maintain_primary_next || maintenance_guard(&eta_p);
    let maintain_s = proposal.maintain_secondary_next || maintenance_guard(&eta_s);

    // Evaluate the adopted plan for its expected breakdown.
    let mut x = vec![0.0, 1.0, 0.0];
    x.extend(std::iter::repeat_n(0.0, 2 * months));
    x[3] = if maintain_p { 1.0 } else { 0.0 };
    x[4] = if maintain_s { 1.0 } else { 0.0 };
    let (evaluation, _, _) = rollout_decision(&x, obs, months);

    let hourly_targets = proposal
        .hourly_target_fracs
        .iter()
        .map(|f| f.clamp(MIN_POWER_FRAC, 1.0) * FULL_POWER)
        .collect();
    Ok(OperatorPlan {
        hourly_targets,
        maintain_primary_next: maintain_p,
        maintain_secondary_next: maintain_s,
        expected: evaluation.reward,
        predicted_min_eta: evaluation.min_eta,
        fallback,
    })
}
