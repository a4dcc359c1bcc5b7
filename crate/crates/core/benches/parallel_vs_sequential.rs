//! Parallel-vs-sequential comparison of the data-parallel inner loops:
//! ensemble propagation, sensitivity-row evaluation, planner rollouts, and
//! batched governor calls. Build with the default `parallel` feature to
//! exercise the rayon paths; the sequential variants run in both builds.

use std::sync::OnceLock;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use fhr_twin::enkf::{
    init_ensemble, predict, AugmentedLayout, EnkfConfig, Ensemble, NetDynamics, NoiseSpec,
};
use fhr_twin::governor::{govern, ConstraintSet, GovernorConfig};
use fhr_twin::operator::{
    plan_period, CemPlanner, HourlyTransitionModel, PlanObservation, PlannerConfig, RewardWeights,
};
use fhr_twin::plant::{PlantConstants, PlantState, FULL_POWER};
use fhr_twin::pump::PumpHealthState;
use fhr_twin::runtime::prep::prepare_original_net;
use fhr_twin::seed::SeedTree;
use fhr_twin::sobol::run_surrogate_study;
use fhr_twin::state::VarId;
use fhr_twin::surrogate::{ParamRef, PumpContext, SurrogateInput, SurrogateNet};

struct Fixture {
    consts: PlantConstants,
    net: SurrogateNet,
    refs: Vec<ParamRef>,
    model: HourlyTransitionModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let consts = PlantConstants::default();
        let seed = SeedTree::new(1234);
        let (net, _) = prepare_original_net(&consts, &seed, 24).expect("fit");
        let mut refs = Vec::new();
        for name in ["I", "II"] {
            refs.extend(net.point_coef_refs(net.block_index(name).unwrap()));
        }
        let mut rng = seed.child("deg").rng();
        let primary = fhr_twin::pump::DegradationModel::new(
            fhr_twin::pump::DegradationParams::primary_demo(),
            consts.primary_pump.rated_flow,
            &mut rng,
        )
        .unwrap();
        let secondary = fhr_twin::pump::DegradationModel::new(
            fhr_twin::pump::DegradationParams::secondary_demo(),
            consts.secondary_pump.rated_flow,
            &mut rng,
        )
        .unwrap();
        let model = fhr_twin::operator::compress_surrogate(
            &net,
            &primary,
            &secondary,
            &fhr_twin::operator::SamplingPlan::default(),
            &consts,
            true,
        )
        .unwrap();
        Fixture {
            consts,
            net,
            refs,
            model,
        }
    })
}

fn make_ensemble(f: &Fixture, n_m: usize, noise: &NoiseSpec) -> Ensemble {
    let plant = PlantState::commissioning(0.9, 1.0, 1.0, &f.consts);
    let f0 = f.net.to_filter(&plant.sys);
    let theta0 = f.net.theta(&f.refs).unwrap();
    init_ensemble(
        f0.as_slice(),
        f0.as_slice(),
        &theta0,
        noise,
        n_m,
        &SeedTree::new(5),
    )
    .unwrap()
}

fn bench_ensemble_predict(c: &mut Criterion) {
    let f = fixture();
    let layout = AugmentedLayout {
        n_sys: fhr_twin::state::N_VARS,
        n_theta: f.refs.len(),
    };
    let noise = NoiseSpec::uniform(
        &layout,
        1e-15,
        1e-30,
        DMatrix::from_diagonal_element(1, 1, 1e-30),
        1e-8,
        1e-16,
    )
    .with_zero_state_rows(&[VarId::T.index(), layout.n_sys + VarId::T.index()]);
    let mut group = c.benchmark_group("ensemble_predict");
    for n_m in [20usize, 200] {
        for parallel in [false, true] {
            let label = if parallel { "parallel" } else { "sequential" };
            group.bench_with_input(BenchmarkId::new(label, n_m), &n_m, |b, &n_m| {
                let mut ens = make_ensemble(f, n_m, &noise);
                let dynamics = NetDynamics {
                    net: &f.net,
                    theta_refs: &f.refs,
                    pumps: PumpContext::default(),
                };
                let cfg = EnkfConfig {
                    parallel,
                    ..EnkfConfig::default()
                };
                let seed = SeedTree::new(9);
                let mut k = 0u64;
                let u = SurrogateInput {
                    t: 0.0,
                    target_power: 0.9 * FULL_POWER,
                };
                b.iter(|| {
                    predict(&mut ens, &dynamics, &u, &noise, k, &seed, &cfg).unwrap();
                    k += 1;
                });
            });
        }
    }
    group.finish();
}

fn bench_sensitivity_rows(c: &mut Criterion) {
    let f = fixture();
    let mut group = c.benchmark_group("sensitivity_study");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_function(BenchmarkId::new(label, "n256_d49"), |b| {
            b.iter(|| {
                run_surrogate_study(
                    &f.net,
                    &f.refs,
                    &[VarId::QDotRx],
                    0.5,
                    256,
                    &f.consts,
                    &SeedTree::new(3),
                    parallel,
                )
                .unwrap()
            });
        });
    }
    group.finish();
}

fn bench_planner_rollouts(c: &mut Criterion) {
    let f = fixture();
    let demand: Vec<f64> = (0..720).map(|h| 0.7 + 0.2 * ((h % 7) as f64 / 6.0)).collect();
    let weights = RewardWeights::default();
    let config = PlannerConfig::default();
    let mut group = c.benchmark_group("planner_period");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_function(BenchmarkId::new(label, "one_month"), |b| {
            b.iter(|| {
                let obs = PlanObservation {
                    demand_fracs: &demand,
                    start_power_frac: 0.9,
                    health: PumpHealthState::new(0.0, 1.1, 1.1),
                    model: &f.model,
                    weights: &weights,
                    config: &config,
                    seed: SeedTree::new(77),
                    parallel,
                };
                plan_period(&obs, &mut CemPlanner).unwrap()
            });
        });
    }
    group.finish();
}

fn bench_governor_batch(c: &mut Criterion) {
    let f = fixture();
    let constraints = ConstraintSet::defaults();
    let gcfg = GovernorConfig::default();
    let anchor = PlantState::commissioning(0.8, 1.0, 1.0, &f.consts).sys;
    let mut group = c.benchmark_group("governor_batch");
    group.sample_size(10);
    for parallel in [false, true] {
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_function(BenchmarkId::new(label, "32_calls"), |b| {
            b.iter(|| {
                let results = fhr_twin::exec::map_indexed(32, parallel, |i| {
                    let target = (0.55 + 0.01 * (i % 40) as f64) * FULL_POWER;
                    govern(
                        target,
                        0.8 * FULL_POWER,
                        &f.net,
                        &anchor,
                        &anchor,
                        &PumpContext::default(),
                        &constraints,
                        &gcfg,
                    )
                });
                results.into_iter().filter_map(|r| r.ok()).count()
            });
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_ensemble_predict,
    bench_sensitivity_rows,
    bench_planner_rollouts,
    bench_governor_batch
);
criterion_main!(benches);
