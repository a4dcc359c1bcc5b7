//! Offline preparation: training-data generation on the truth emulator and
//! the standard fitting recipes for both surrogate variants.
//!
//! Everything here is seeded and deterministic, so demo presets can rebuild
//! their surrogates from scratch instead of shipping opaque checkpoints.

use rand::Rng;

use crate::plant::{
    inject_sg_shock, step_plant, PlantConstants, PlantState, FULL_POWER, SHOCK_ENVELOPE_K,
};
use crate::seed::SeedTree;
use crate::state::VarId;
use crate::surrogate::{
    build_shock_surrogate, fit_original_net, FitOptions, FitReport, ShockTrainingSet,
    SurrogateError, SurrogateNet, Trajectory,
};
use std::collections::BTreeMap;

/// Steps per hour at the 5 s system step.
pub const STEPS_PER_HOUR: usize = 720;

/// Seeded hourly load-follow targets: a bounded random walk with holds, so
/// the corpus mixes transitions of many sizes with long steady stretches.
pub fn synth_hourly_targets(seed: &SeedTree, hours: usize, lo_frac: f64, hi_frac: f64) -> Vec<f64> {
    let mut rng = seed.child("demand").rng();
    let mut targets = Vec::with_capacity(hours);
    let mut level: f64 = 0.5 * (lo_frac + hi_frac);
    for _ in 0..hours {
        let roll: f64 = rng.random();
        if roll > 0.35 {
            let step: f64 = rng.random_range(-0.18..0.18);
            level = (level + step).clamp(lo_frac, hi_frac);
        }
        targets.push(level * FULL_POWER);
    }
    targets
}

/// Run the truth emulator through an hourly target schedule. Pump loss
/// coefficients are held at the given values; an optional shock schedule
/// perturbs the SG boundary (hour index, delta kelvin).
pub fn generate_trajectory(
    consts: &PlantConstants,
    hourly_targets: &[f64],
    k_p: f64,
    k_s: f64,
    shocks: &[(usize, f64)],
) -> Result<Trajectory, crate::plant::PlantError> {
    assert!(!hourly_targets.is_empty());
    let first_frac = (hourly_targets[0] / FULL_POWER).clamp(0.5, 1.0);
    let mut plant = PlantState::commissioning(first_frac, k_p, k_s, consts);
    let mut states = Vec::with_capacity(hourly_targets.len() * STEPS_PER_HOUR);
    let mut targets = Vec::with_capacity(states.capacity());
    for (h, target) in hourly_targets.iter().enumerate() {
        if let Some((_, dt)) = shocks.iter().find(|(sh, _)| *sh == h) {
            plant = inject_sg_shock(&plant, *dt).state;
        }
        for _ in 0..STEPS_PER_HOUR {
            plant = step_plant(&plant, *target, 5.0, k_p, k_s, consts)?;
            states.push(plant.sys);
            targets.push(*target);
        }
    }
    Ok(Trajectory { states, targets })
}

/// Standard training recipe for the original net: a long seeded load-follow
/// plus steady anchor segments across the power band.
pub fn original_training_corpus(
    consts: &PlantConstants,
    seed: &SeedTree,
    hours: usize,
) -> Result<Vec<Trajectory>, crate::plant::PlantError> {
    let mut corpus = Vec::new();
    let targets = synth_hourly_targets(&seed.child("train"), hours, 0.55, 1.0);
    corpus.push(generate_trajectory(consts, &targets, 1.0, 1.0, &[])?);
    // Steady anchors pin the fixed points of the fitted dynamics.
    for (i, frac) in [0.6, 0.8, 1.0].iter().enumerate() {
        let steady = vec![frac * FULL_POWER; 4 + i % 2];
        corpus.push(generate_trajectory(consts, &steady, 1.0, 1.0, &[])?);
    }
    Ok(corpus)
}

/// Fit the original surrogate with the standard recipe.
pub fn prepare_original_net(
    consts: &PlantConstants,
    seed: &SeedTree,
    train_hours: usize,
) -> Result<(SurrogateNet, BTreeMap<String, FitReport>), PrepError> {
    let corpus = original_training_corpus(consts, seed, train_hours)?;
    let (net, reports) = fit_original_net(&corpus, consts, &FitOptions::default())?;
    Ok((net, reports))
}

/// Shock training recipe: paired trajectories over the same random power
/// moves in the 60-100% band, one with random boundary perturbations inside
/// the trained envelope and one without.
pub fn shock_training_corpus(
    consts: &PlantConstants,
    seed: &SeedTree,
    hours: usize,
) -> Result<ShockTrainingSet, crate::plant::PlantError> {
    let mut targets = synth_hourly_targets(&seed.child("shock-train"), hours, 0.60, 1.0);
    // Pin coverage of the trained band regardless of the random walk.
    let n = targets.len();
    targets[n / 3] = 0.62 * FULL_POWER;
    targets[2 * n / 3] = FULL_POWER;
    let mut rng = seed.child("shock-schedule").rng();
    let mut shocks = Vec::new();
    let mut h = 2;
    while h < hours {
        let dt: f64 = rng.random_range(-SHOCK_ENVELOPE_K..SHOCK_ENVELOPE_K);
        shocks.push((h, dt));
        h += rng.random_range(2..4);
    }
    // Return to nominal at the end of each shocked stretch.
    shocks.push((hours.saturating_sub(1), 0.0));
    let with_shock = vec![generate_trajectory(consts, &targets, 1.0, 1.0, &shocks)?];
    let without_shock = vec![generate_trajectory(consts, &targets, 1.0, 1.0, &[])?];
    Ok(ShockTrainingSet {
        with_shock,
        without_shock,
    })
}

/// Fit the shock-adapted surrogate with the standard recipe (21 h of power
/// moves with boundary perturbations up to the envelope).
pub fn prepare_shock_net(
    consts: &PlantConstants,
    seed: &SeedTree,
    train_hours: usize,
) -> Result<(SurrogateNet, BTreeMap<String, FitReport>), PrepError> {
    let corpus = shock_training_corpus(consts, seed, train_hours)?;
    let (net, reports) = build_shock_surrogate(&corpus, consts, &FitOptions::default())?;
    Ok((net, reports))
}

/// Mean absolute percent error of the surrogate's core-power prediction over
/// a held-out trajectory, stepping open-loop from the trajectory's first two
/// states (the offline-fit acceptance gate).
pub fn core_power_mape(
    net: &SurrogateNet,
    holdout: &Trajectory,
) -> Result<f64, SurrogateError> {
    let mut net = net.clone();
    let mut lag2 = holdout.states[0];
    let mut lag1 = holdout.states[1];
    let pumps = crate::surrogate::PumpContext::default();
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 2..holdout.len() {
        let u = crate::surrogate::SurrogateInput {
            t: lag1[VarId::T],
            target_power: holdout.targets[k],
        };
        let pred = net.step(&lag2, &lag1, &u, &pumps)?;
        let truth = holdout.states[k][VarId::QDotRx];
        total += (pred[VarId::QDotRx] - truth).abs() / truth.abs().max(1.0);
        count += 1;
        lag2 = lag1;
        lag1 = pred;
    }
    Ok(100.0 * total / count.max(1) as f64)
}

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error(transparent)]
    Plant(#[from] crate::plant::PlantError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}
