//! Stochastic (perturbed-observation) Ensemble Kalman Filter with joint
//! state/parameter estimation.
//!
//! The augmented state stacks two lagged system states and the assimilated
//! parameter vector: `[x(k-1), x(k), theta_A]`. Prediction advances each
//! member's state rows through the dynamics with that member's own theta and
//! adds process noise; parameter rows follow a random walk. The update uses
//! the ensemble-approximated gain
//! `K = (1/(n_m-1)) Xa Ya^T [(1/(n_m-1)) Ya Ya^T]^-1` with observation
//! perturbations entering through `Y = H X + E`, and an unperturbed
//! innovation `d 1^T - H X`, so the exact-measurement limit pins observed
//! rows to the datum to machine precision.
//!
//! Member propagation is embarrassingly parallel; every reduction runs in a
//! fixed order and per-member noise comes from stateless derived streams, so
//! parallel and sequential runs agree bit for bit.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::seed::SeedTree;
use crate::state::{SystemState, VarId, N_VARS};
use crate::surrogate::{ParamRef, PumpContext, SurrogateError, SurrogateInput, SurrogateNet};

#[derive(Debug, thiserror::Error)]
pub enum EnkfError {
    #[error("ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("covariance not PSD: {0}")]
    NotPsd(String),
    #[error(
        "singular innovation covariance (collapsed ensemble or vanishing measurement noise); \
         condition {condition:.3e}"
    )]
    SingularInnovation { condition: f64 },
    #[error("noise spec invalid: {0}")]
    NoiseSpec(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// Dynamics seen by the filter, in filter space. Implemented by the
/// surrogate network and by small test systems.
pub trait FilterDynamics: Sync {
    /// State dimension (one lag block).
    fn n_vars(&self) -> usize;
    /// Advance one step from the two lag blocks with the given parameter
    /// values substituted.
    fn step_filter(
        &self,
        lag_prev: &[f64],
        lag_curr: &[f64],
        theta: &[f64],
        u: &SurrogateInput,
    ) -> Result<Vec<f64>, SurrogateError>;
}

/// Adapter: a surrogate network plus the assimilated-parameter addressing.
pub struct NetDynamics<'a> {
    pub net: &'a SurrogateNet,
    pub theta_refs: &'a [ParamRef],
    pub pumps: PumpContext,
}

impl FilterDynamics for NetDynamics<'_> {
    fn n_vars(&self) -> usize {
        N_VARS
    }

    fn step_filter(
        &self,
        lag_prev: &[f64],
        lag_curr: &[f64],
        theta: &[f64],
        u: &SurrogateInput,
    ) -> Result<Vec<f64>, SurrogateError> {
        let lag2 = self.net.from_filter(lag_prev);
        let lag1 = self.net.from_filter(lag_curr);
        let overrides: Vec<(ParamRef, f64)> = self
            .theta_refs
            .iter()
            .copied()
            .zip(theta.iter().copied())
            .collect();
        let next = self
            .net
            .eval_step_with(&lag2, &lag1, u, &self.pumps, &overrides)?;
        Ok(self.net.to_filter(&next).as_slice().to_vec())
    }
}

/// Layout of the augmented vector `[x(k-1), x(k), theta]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedLayout {
    pub n_sys: usize,
    pub n_theta: usize,
}

impl AugmentedLayout {
    pub fn n_aug(&self) -> usize {
        2 * self.n_sys + self.n_theta
    }

    pub fn prev_offset(&self) -> usize {
        0
    }

    pub fn curr_offset(&self) -> usize {
        self.n_sys
    }

    pub fn theta_offset(&self) -> usize {
        2 * self.n_sys
    }

    /// Augmented row of a current-block variable index.
    pub fn curr_row(&self, var: usize) -> usize {
        self.curr_offset() + var
    }
}

/// Diagonal noise specification in filter space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Process-noise std per augmented state row (both lag blocks).
    pub sigma_state: DVector<f64>,
    /// Random-walk std per parameter row; strictly positive (singularity
    /// guard).
    pub sigma_theta: DVector<f64>,
    /// Measurement covariance.
    pub gamma: DMatrix<f64>,
    /// Initial std per augmented state row.
    pub c0_state: DVector<f64>,
    /// Initial std per parameter row.
    pub c0_theta: DVector<f64>,
}

impl NoiseSpec {
    /// Uniform scalar variances, the form the demonstrations use.
    pub fn uniform(
        layout: &AugmentedLayout,
        sigma2: f64,
        sigma_theta2: f64,
        gamma: DMatrix<f64>,
        c0_state2: f64,
        c0_theta2: f64,
    ) -> Self {
        NoiseSpec {
            sigma_state: DVector::from_element(2 * layout.n_sys, sigma2.max(0.0).sqrt()),
            sigma_theta: DVector::from_element(layout.n_theta, sigma_theta2.max(0.0).sqrt()),
            gamma,
            c0_state: DVector::from_element(2 * layout.n_sys, c0_state2.max(0.0).sqrt()),
            c0_theta: DVector::from_element(layout.n_theta, c0_theta2.max(0.0).sqrt()),
        }
    }

    /// Zero the noise of specific state rows (e.g. the time coordinate,
    /// which is bookkeeping rather than a dynamical state: zero spread keeps
    /// the gain from touching it).
    pub fn with_zero_state_rows(mut self, rows: &[usize]) -> Self {
        for &r in rows {
            if r < self.sigma_state.len() {
                self.sigma_state[r] = 0.0;
                self.c0_state[r] = 0.0;
            }
        }
        self
    }

    pub fn validate(&self, layout: &AugmentedLayout, n_y: usize) -> Result<(), EnkfError> {
        if self.sigma_state.len() != 2 * layout.n_sys
            || self.sigma_theta.len() != layout.n_theta
            || self.c0_state.len() != 2 * layout.n_sys
            || self.c0_theta.len() != layout.n_theta
        {
            return Err(EnkfError::Dimension("noise spec lengths".into()));
        }
        if self.gamma.nrows() != n_y || self.gamma.ncols() != n_y {
            return Err(EnkfError::Dimension(format!(
                "gamma is {}x{}, expected {n_y}x{n_y}",
                self.gamma.nrows(),
                self.gamma.ncols()
            )));
        }
        if self.sigma_state.iter().any(|s| *s < 0.0) || self.c0_state.iter().any(|s| *s < 0.0) {
            return Err(EnkfError::NoiseSpec("negative std".into()));
        }
        if layout.n_theta > 0 && self.sigma_theta.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(EnkfError::NoiseSpec(
                "parameter random-walk std must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Observation model: each row selects one current-block variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationModel {
    /// Indices into the current state block.
    pub observed: Vec<usize>,
}

impl ObservationModel {
    pub fn from_var_ids(ids: &[VarId]) -> Self {
        ObservationModel {
            observed: ids.iter().map(|v| v.index()).collect(),
        }
    }

    pub fn n_y(&self) -> usize {
        self.observed.len()
    }

    pub fn validate(&self, layout: &AugmentedLayout) -> Result<(), EnkfError> {
        if self.observed.is_empty() {
            return Err(EnkfError::Dimension("empty observation set".into()));
        }
        let mut seen = vec![false; layout.n_sys];
        for &i in &self.observed {
            if i >= layout.n_sys {
                return Err(EnkfError::Dimension(format!(
                    "observed index {i} out of range"
                )));
            }
            if seen[i] {
                return Err(EnkfError::Dimension(format!("variable {i} observed twice")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Filtering configuration knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnkfConfig {
    /// Relative jitter applied once to a singular innovation covariance.
    pub innovation_jitter: f64,
    /// Inflation factor on the redraw of a diverged member.
    pub divergence_inflation: f64,
    /// Propagate members on the rayon pool when the feature allows it.
    pub parallel: bool,
    /// Multiplicative covariance inflation (1.0 = none, the demo setting).
    pub inflation: f64,
}

impl Default for EnkfConfig {
    fn default() -> Self {
        EnkfConfig {
            innovation_jitter: 1e-12,
            divergence_inflation: 10.0,
            parallel: true,
            inflation: 1.0,
        }
    }
}

/// The member matrix with its layout.
#[derive(Debug, Clone)]
pub struct Ensemble {
    /// n_aug x n_m.
    pub members: DMatrix<f64>,
    pub layout: AugmentedLayout,
}

impl Ensemble {
    pub fn n_members(&self) -> usize {
        self.members.ncols()
    }

    /// Ensemble mean (fixed summation order).
    pub fn mean(&self) -> DVector<f64> {
        let n_m = self.n_members();
        let mut mean = DVector::zeros(self.members.nrows());
        for j in 0..n_m {
            mean += self.members.column(j);
        }
        mean / n_m as f64
    }

    /// Anomaly matrix (deviations from the mean).
    pub fn anomalies(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut out = self.members.clone();
        for j in 0..out.ncols() {
            let mut col = out.column_mut(j);
            col -= &mean;
        }
        out
    }

    /// Ensemble covariance estimate `X~ X~^T / (n_m - 1)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let a = self.anomalies();
        let n_m = self.n_members();
        &a * a.transpose() / (n_m as f64 - 1.0)
    }

    /// Per-row variance (diagonal of the covariance).
    pub fn row_variances(&self) -> DVector<f64> {
        let a = self.anomalies();
        let n_m = self.n_members() as f64;
        DVector::from_iterator(
            a.nrows(),
            (0..a.nrows()).map(|r| a.row(r).iter().map(|v| v * v).sum::<f64>() / (n_m - 1.0)),
        )
    }

    pub fn mean_theta(&self) -> DVector<f64> {
        let m = self.mean();
        m.rows(self.layout.theta_offset(), self.layout.n_theta)
            .into_owned()
    }

    /// Current-block mean as a raw system state.
    pub fn mean_system_state(&self, net: &SurrogateNet) -> SystemState {
        let m = self.mean();
        let curr = m.rows(self.layout.curr_offset(), self.layout.n_sys);
        net.from_filter(curr.as_slice())
    }

    pub fn mean_prev_state(&self, net: &SurrogateNet) -> SystemState {
        let m = self.mean();
        let prev = m.rows(self.layout.prev_offset(), self.layout.n_sys);
        net.from_filter(prev.as_slice())
    }
}

/// Draw members around the given augmented mean with diagonal initial
/// covariance; the empirical mean is re-centered onto the given mean exactly.
pub fn init_ensemble(
    mean_prev: &[f64],
    mean_curr: &[f64],
    theta: &[f64],
    noise: &NoiseSpec,
    n_m: usize,
    seed: &SeedTree,
) -> Result<Ensemble, EnkfError> {
    if n_m < 2 {
        return Err(EnkfError::TooFewMembers(n_m));
    }
    let n_sys = mean_curr.len();
    if mean_prev.len() != n_sys {
        return Err(EnkfError::Dimension("lag block lengths differ".into()));
    }
    let layout = AugmentedLayout {
        n_sys,
        n_theta: theta.len(),
    };
    noise.validate(&layout, noise.gamma.nrows())?;
    let n_aug = layout.n_aug();
    let mut members = DMatrix::zeros(n_aug, n_m);
    let draw_seed = seed.child("init");
    for j in 0..n_m {
        let mut rng = draw_seed.index(j as u64).rng();
        let mut col = members.column_mut(j);
        for i in 0..n_sys {
            let z: f64 = StandardNormal.sample(&mut rng);
            col[i] = mean_prev[i] + noise.c0_state[i] * z;
        }
        for i in 0..n_sys {
            let z: f64 = StandardNormal.sample(&mut rng);
            col[n_sys + i] = mean_curr[i] + noise.c0_state[n_sys + i] * z;
        }
        for i in 0..layout.n_theta {
            let z: f64 = StandardNormal.sample(&mut rng);
            col[2 * n_sys + i] = theta[i] + noise.c0_theta[i] * z;
        }
    }
    let mut ens = Ensemble { members, layout };
    let emp = ens.mean();
    let mut target = DVector::zeros(n_aug);
    target.rows_mut(0, n_sys).copy_from_slice(mean_prev);
    target.rows_mut(n_sys, n_sys).copy_from_slice(mean_curr);
    target
        .rows_mut(2 * n_sys, theta.len())
        .copy_from_slice(theta);
    let shift = target - emp;
    for j in 0..ens.n_members() {
        let mut col = ens.members.column_mut(j);
        col += &shift;
    }
    Ok(ens)
}

/// Bookkeeping for one prediction step.
#[derive(Debug, Clone, Default)]
pub struct PredictEvents {
    /// Members that produced non-finite states and were re-drawn around the
    /// pre-step ensemble mean with inflated spread.
    pub diverged: Vec<usize>,
}

/// Propagate every member one step: state rows through the dynamics with the
/// member's own theta, parameter rows by random walk.
pub fn predict<D: FilterDynamics>(
    ens: &mut Ensemble,
    dynamics: &D,
    u: &SurrogateInput,
    noise: &NoiseSpec,
    step_index: u64,
    seed: &SeedTree,
    config: &EnkfConfig,
) -> Result<PredictEvents, EnkfError> {
    let layout = ens.layout.clone();
    let n_sys = layout.n_sys;
    if dynamics.n_vars() != n_sys {
        return Err(EnkfError::Dimension("dynamics dimension".into()));
    }
    noise.validate(&layout, noise.gamma.nrows())?;
    let n_m = ens.n_members();
    let pre_mean = ens.mean();
    let step_seed = seed.child("predict").index(step_index);

    let members = &ens.members;
    let columns: Vec<(Vec<f64>, bool)> = exec::map_indexed(n_m, config.parallel, |j| {
        let col = members.column(j);
        let all = col.as_slice();
        let prev = &all[..n_sys];
        let curr = &all[n_sys..2 * n_sys];
        let theta = &all[2 * n_sys..];
        let mut rng = step_seed.index(j as u64).rng();
        let stepped = dynamics.step_filter(prev, curr, theta, u);
        let mut out = vec![0.0; layout.n_aug()];
        let mut diverged = false;
        match stepped {
            Ok(next) if next.iter().all(|v| v.is_finite()) => {
                out[..n_sys].copy_from_slice(curr);
                out[n_sys..2 * n_sys].copy_from_slice(&next);
            }
            _ => {
                diverged = true;
                for i in 0..2 * n_sys {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[i] = pre_mean[i]
                        + config.divergence_inflation
                            * noise.c0_state[i].max(noise.sigma_state[i])
                            * z;
                }
            }
        }
        out[2 * n_sys..].copy_from_slice(theta);
        for (o, sigma) in out.iter_mut().zip(noise.sigma_state.iter()) {
            if *sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                *o += sigma * z;
            }
        }
        for i in 0..layout.n_theta {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[2 * n_sys + i] += noise.sigma_theta[i] * z;
        }
        (out, diverged)
    });

    let mut events = PredictEvents::default();
    for (j, (values, diverged)) in columns.into_iter().enumerate() {
        if diverged {
            events.diverged.push(j);
        }
        ens.members.column_mut(j).copy_from_slice(&values);
    }
    if config.inflation != 1.0 {
        let mean = ens.mean();
        for j in 0..n_m {
            let dev = (ens.members.column(j) - &mean) * config.inflation;
            ens.members.column_mut(j).copy_from(&(&mean + dev));
        }
    }
    Ok(events)
}

/// Diagnostics from one update.
#[derive(Debug, Clone)]
pub struct UpdateStats {
    /// |mean(observed) - d| before the update, per observation.
    pub pre_distance: Vec<f64>,
    /// Same after the update.
    pub post_distance: Vec<f64>,
    /// Condition estimate (min/max eigenvalue) of the innovation covariance.
    pub innovation_condition: f64,
    /// Whether the one-shot jitter was applied.
    pub jittered: bool,
}

/// Assimilate one measurement (filter-space units).
pub fn update(
    ens: &mut Ensemble,
    d: &DVector<f64>,
    obs: &ObservationModel,
    gamma: &DMatrix<f64>,
    step_index: u64,
    seed: &SeedTree,
    config: &EnkfConfig,
) -> Result<UpdateStats, EnkfError> {
    let layout = ens.layout.clone();
    obs.validate(&layout)?;
    let n_y = obs.n_y();
    if d.len() != n_y {
        return Err(EnkfError::Dimension(format!(
            "measurement has {} entries, observation model has {n_y}",
            d.len()
        )));
    }
    if gamma.nrows() != n_y || gamma.ncols() != n_y {
        return Err(EnkfError::Dimension("gamma shape".into()));
    }
    let n_m = ens.n_members();
    let h_rows: Vec<usize> = obs.observed.iter().map(|v| layout.curr_row(*v)).collect();

    // Y = H X + E with per-member perturbation draws.
    let mut y = DMatrix::zeros(n_y, n_m);
    let e_seed = seed.child("obs-perturb").index(step_index);
    let gamma_zero = gamma.iter().all(|v| *v == 0.0);
    for j in 0..n_m {
        for (i, &r) in h_rows.iter().enumerate() {
            y[(i, j)] = ens.members[(r, j)];
        }
        if !gamma_zero {
            let mut rng = e_seed.index(j as u64).rng();
            let e = crate::plant::sample_mvn(gamma, &mut rng)
                .map_err(|e| EnkfError::NotPsd(e.to_string()))?;
            for i in 0..n_y {
                y[(i, j)] += e[i];
            }
        }
    }

    // Means and anomalies in fixed order.
    let x_mean = ens.mean();
    let mut y_mean = DVector::zeros(n_y);
    for j in 0..n_m {
        y_mean += y.column(j);
    }
    y_mean /= n_m as f64;
    let mut y_anom = y;
    for j in 0..n_m {
        let mut col = y_anom.column_mut(j);
        col -= &y_mean;
    }
    let mut x_anom = ens.members.clone();
    for j in 0..n_m {
        let mut col = x_anom.column_mut(j);
        col -= &x_mean;
    }

    let scale = 1.0 / (n_m as f64 - 1.0);
    let mut s = &y_anom * y_anom.transpose() * scale;
    let cross = &x_anom * y_anom.transpose() * scale;

    let pre_distance: Vec<f64> = h_rows
        .iter()
        .enumerate()
        .map(|(i, &r)| (x_mean[r] - d[i]).abs())
        .collect();

    // Conditioning guard with a single declared jitter.
    let mut jittered = false;
    let cond = |m: &DMatrix<f64>| -> f64 {
        let eig = nalgebra::SymmetricEigen::new((m + m.transpose()) * 0.5);
        let max = eig.eigenvalues.amax();
        if max <= 0.0 {
            0.0
        } else {
            eig.eigenvalues.iter().fold(f64::INFINITY, |a, b| a.min(*b)) / max
        }
    };
    let mut condition = cond(&s);
    let trace = (0..n_y).map(|i| s[(i, i)]).sum::<f64>().max(0.0);
    if condition.is_nan() || condition <= 1e-14 {
        if config.innovation_jitter > 0.0 {
            let eps = (config.innovation_jitter * trace / n_y as f64).max(1e-300);
            for i in 0..n_y {
                s[(i, i)] += eps;
            }
            jittered = true;
            condition = cond(&s);
        }
        if condition.is_nan() || condition <= 1e-16 {
            return Err(EnkfError::SingularInnovation { condition });
        }
    }

    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or(EnkfError::SingularInnovation { condition })?;
    let gain = cross * s_inv;

    // X_a = X + K (d 1^T - H X).
    for j in 0..n_m {
        let mut innov = DVector::zeros(n_y);
        for (i, &r) in h_rows.iter().enumerate() {
            innov[i] = d[i] - ens.members[(r, j)];
        }
        let delta = &gain * innov;
        let mut col = ens.members.column_mut(j);
        col += &delta;
    }

    let post_mean = ens.mean();
    let post_distance: Vec<f64> = h_rows
        .iter()
        .enumerate()
        .map(|(i, &r)| (post_mean[r] - d[i]).abs())
        .collect();

    Ok(UpdateStats {
        pre_distance,
        post_distance,
        innovation_condition: condition,
        jittered,
    })
}

/// Record of one assimilation step.
#[derive(Debug, Clone)]
pub struct AssimilationOutcome {
    pub predict_events: PredictEvents,
    pub update_stats: Option<UpdateStats>,
    /// Ensemble-mean parameter vector after the step (written back into the
    /// net when an update ran).
    pub theta_mean: DVector<f64>,
}

/// One full filter step against a surrogate network: predict always, update
/// when a raw-unit measurement is present, then write the posterior-mean
/// theta back into the net.
#[allow(clippy::too_many_arguments)]
pub fn assimilate_step(
    ens: &mut Ensemble,
    net: &mut SurrogateNet,
    theta_refs: &[ParamRef],
    u: &SurrogateInput,
    pumps: &PumpContext,
    d_raw: Option<&DVector<f64>>,
    obs: &ObservationModel,
    noise: &NoiseSpec,
    step_index: u64,
    seed: &SeedTree,
    config: &EnkfConfig,
) -> Result<AssimilationOutcome, EnkfError> {
    let predict_events = {
        let dynamics = NetDynamics {
            net,
            theta_refs,
            pumps: *pumps,
        };
        predict(ens, &dynamics, u, noise, step_index, seed, config)?
    };
    let mut update_stats = None;
    if let Some(d_raw) = d_raw {
        // Convert the raw measurement into filter space.
        let d = DVector::from_iterator(
            obs.n_y(),
            obs.observed
                .iter()
                .zip(d_raw.iter())
                .map(|(vi, v)| v / net.filter_scale(VarId::ALL[*vi])),
        );
        update_stats = Some(update(
            ens,
            &d,
            obs,
            &noise.gamma.clone(),
            step_index,
            seed,
            config,
        )?);
        let theta_mean = ens.mean_theta();
        net.set_theta(theta_refs, theta_mean.as_slice())?;
    }
    Ok(AssimilationOutcome {
        predict_events,
        update_stats,
        theta_mean: ens.mean_theta(),
    })
}
