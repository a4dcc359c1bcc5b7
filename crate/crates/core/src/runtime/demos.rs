//! The three demonstration presets.

use super::config::*;

/// Long-term operations and maintenance planning: starts with used pumps
/// (both loss coefficients at 1.15), hourly assimilation at minute 30,
/// hourly setpoints, monthly planning. The full preset runs a year; a
/// two-month smoke variant ships for desk-scale runs.
pub fn demo_long_term(months: usize, seed: u64) -> ScenarioConfig {
    let months = months.max(1);
    ScenarioConfig {
        name: format!("long-term-{months}mo"),
        duration_hours: (months * 720) as f64,
        seed,
        start_frac: 1.0,
        demand: DemandConfig::Synthetic {
            lo_frac: 0.55,
            hi_frac: 1.0,
        },
        pumps: PumpScenarioConfig {
            k0_primary: 1.15,
            k0_secondary: 1.15,
            ..PumpScenarioConfig::default()
        },
        output: OutputConfig {
            decimation_steps: if months > 3 { 72 } else { 12 },
            ..OutputConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

/// Short-term accuracy refinement: 3.5 hours, four power changes, fresh
/// pumps. `beta_steps` contrasts the hourly cadence (720) against the
/// high-frequency cadence (50).
pub fn demo_short_term(beta_steps: usize, seed: u64) -> ScenarioConfig {
    let ts = TimescaleConfig {
        beta_steps,
        beta_offset_steps: if beta_steps >= 720 { 360 } else { 0 },
        ..TimescaleConfig::default()
    };
    ScenarioConfig {
        name: format!("short-term-beta{beta_steps}"),
        duration_hours: 3.5,
        seed,
        start_frac: 1.0,
        timescales: ts,
        demand: DemandConfig::Hourly {
            fracs: vec![0.95, 0.78, 0.92, 0.70],
        },
        pumps: PumpScenarioConfig::default(),
        output: OutputConfig {
            decimation_steps: 1,
            ..OutputConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

/// System shock capturing: 24 hours at hourly cadences, a +5 K steam
/// generator boundary shock at hour 12.5, the shock-adapted surrogate, and
/// two observations (core power and secondary pump flow).
pub fn demo_shock(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "shock".into(),
        duration_hours: 24.0,
        seed,
        start_frac: 0.79,
        // Load-follow profile that dips toward the admissible floor in the
        // afternoon, so constraint enforcement is active around the shock.
        demand: DemandConfig::Hourly {
            fracs: vec![
                0.79, 0.85, 0.95, 1.0, 0.95, 0.90, 0.85, 0.80, 0.74, 0.68, 0.63, 0.58, 0.55,
                0.52, 0.52, 0.55, 0.60, 0.68, 0.78, 0.85, 0.90, 0.95, 1.0, 0.95,
            ],
        },
        surrogate: SurrogateScenarioConfig {
            variant: SurrogateVariant::Shock,
            train_hours: 21,
            checkpoint: None,
        },
        enkf: EnkfScenarioConfig {
            n_members: 25,
            c0_state: 1e-9,
            c0_theta: 1e-16,
            sigma: 1e-8,
            sigma_theta: 1e-12,
            gamma_diag: vec![1e-15, 1e-10],
            observed: vec!["q_dot_rx".into(), "m_dot_p_s".into()],
            parallel: true,
        },
        sobol_selection: SobolSelectionConfig {
            n: 1 << 10,
            threshold: 0.20,
            force_power_input_coefficients: true,
        },
        shocks: vec![ShockEvent {
            at_hours: 12.5,
            delta_t_kelvin: 5.0,
        }],
        output: OutputConfig {
            decimation_steps: 1,
            ..OutputConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

/// Single-observation variant of the shock demo (the failure-mode contrast:
/// without the flow measurement the filter cannot see the shock).
pub fn demo_shock_single_observation(seed: u64) -> ScenarioConfig {
    let mut cfg = demo_shock(seed);
    cfg.name = "shock-single-obs".into();
    cfg.enkf.observed = vec!["q_dot_rx".into()];
    cfg.enkf.gamma_diag = vec![1e-15];
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        demo_long_term(12, 42).validate().unwrap();
        demo_long_term(2, 42).validate().unwrap();
        demo_short_term(50, 7).validate().unwrap();
        demo_short_term(720, 7).validate().unwrap();
        demo_shock(3).validate().unwrap();
        demo_shock_single_observation(3).validate().unwrap();
    }
}
