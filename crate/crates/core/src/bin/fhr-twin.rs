//! Command-line surface: scenario runs, demonstration presets, surrogate
//! fitting, sensitivity studies, and surrogate compression.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fhr_twin::operator::SamplingPlan;
use fhr_twin::plant::PlantConstants;
use fhr_twin::pump::DegradationParams;
use fhr_twin::runtime::config::{config_schema_json, ScenarioConfig};
use fhr_twin::runtime::log::write_json;
use fhr_twin::runtime::{demos, emit_outputs, prepare_scenario, run_prepared};
use fhr_twin::seed::SeedTree;
use fhr_twin::state::VarId;
use fhr_twin::surrogate::{
    build_shock_surrogate, fit_original_net, Checkpoint, FitOptions, ShockTrainingSet, Trajectory,
};

#[derive(Parser)]
#[command(
    name = "fhr-twin",
    version,
    about = "Closed-loop digital twin for a two-loop high-temperature reactor plant"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Root random seed (overrides the config/preset seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $FHR_TWIN_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats.
    #[arg(long, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Svg])]
    format: Vec<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a TOML config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// Write the JSON schema of the config format and exit.
        #[arg(long)]
        emit_config_schema: Option<PathBuf>,
    },
    /// Run one of the demonstration presets.
    Demo {
        #[command(subcommand)]
        which: DemoCommand,
    },
    /// Fit a surrogate from trajectory data and write a checkpoint.
    FitSurrogate {
        /// Directory containing truth.csv and targets.csv (as emitted by
        /// runs); for the shock variant, shocked/ and nominal/ run
        /// directories. Alternatively use --synthesize.
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = VariantArg::Original)]
        variant: VariantArg,
        /// Generate a seeded training corpus of this many hours instead of
        /// reading data.
        #[arg(long)]
        synthesize: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a sensitivity study from a study config and write the report.
    Sobol {
        study_config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compress a surrogate checkpoint into the hourly transition model.
    Compress {
        net: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Long-term operations and maintenance planning (12 months; use
    /// --months 2 for the smoke preset).
    LongTerm {
        #[arg(long, default_value_t = 12)]
        months: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Short-term accuracy refinement: runs both assimilation cadences and
    /// writes a comparison summary.
    ShortTerm {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Steam-generator shock capturing with two observations.
    Shock {
        #[command(flatten)]
        common: CommonOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Original,
    Shock,
}

fn out_dir(common: &CommonOpts, leaf: &str) -> PathBuf {
    let base = common
        .out
        .clone()
        .or_else(|| std::env::var_os("FHR_TWIN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    base.join(leaf)
}

fn formats(common: &CommonOpts) -> Vec<String> {
    common.format.iter().map(|f| f.to_string()).collect()
}

fn fail(err: impl std::fmt::Display) -> ExitCode {
    let payload = serde_json::json!({ "error": err.to_string() });
    eprintln!("{payload}");
    ExitCode::FAILURE
}

fn run_and_emit(mut config: ScenarioConfig, common: &CommonOpts) -> Result<PathBuf, String> {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let dir = out_dir(common, &config.name.clone());
    let prep = prepare_scenario(&config).map_err(|e| e.to_string())?;
    let log = run_prepared(&config, &prep).map_err(|e| e.to_string())?;
    emit_outputs(&log, &dir, &formats(common)).map_err(|e| e.to_string())?;
    // Persist the study and checkpoint alongside the run for reuse.
    write_json(&dir.join("sensitivity_study.json"), &prep.study).map_err(|e| e.to_string())?;
    let ck = Checkpoint::new(
        prep.net.clone(),
        prep.theta_labels.clone(),
        prep.fit_reports.clone(),
    );
    std::fs::write(
        dir.join("surrogate_checkpoint.json"),
        ck.to_json().map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    Ok(dir)
}

fn read_trajectory(dir: &Path) -> Result<Trajectory, String> {
    let states =
        fhr_twin::runtime::read_state_csv(&dir.join("truth.csv")).map_err(|e| e.to_string())?;
    let mut targets = Vec::with_capacity(states.len());
    let mut rdr = csv::Reader::from_path(dir.join("targets.csv")).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = headers
        .iter()
        .position(|h| h == "applied_setpoint")
        .ok_or("targets.csv lacks applied_setpoint column")?;
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        targets.push(
            row.get(col)
                .ok_or("short row in targets.csv")?
                .parse::<f64>()
                .map_err(|e| e.to_string())?,
        );
    }
    if targets.len() != states.len() {
        return Err(format!(
            "targets.csv has {} rows for {} states",
            targets.len(),
            states.len()
        ));
    }
    Ok(Trajectory { states, targets })
}

fn cmd_fit(
    data: Option<PathBuf>,
    variant: VariantArg,
    synthesize: Option<usize>,
    common: &CommonOpts,
) -> Result<PathBuf, String> {
    let consts = PlantConstants::default();
    let seed = SeedTree::new(common.seed.unwrap_or(1234));
    let dir = out_dir(common, "fit");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let shock_opts = FitOptions {
        steady_refit: true,
        stability_margin: Some(1e-3),
        ..FitOptions::default()
    };
    let (net, reports) = match (variant, synthesize, data) {
        (VariantArg::Original, Some(hours), _) => {
            let corpus = fhr_twin::runtime::prep::original_training_corpus(&consts, &seed, hours)
                .map_err(|e| e.to_string())?;
            fit_original_net(&corpus, &consts, &FitOptions::default()).map_err(|e| e.to_string())?
        }
        (VariantArg::Shock, Some(hours), _) => {
            let corpus = fhr_twin::runtime::prep::shock_training_corpus(&consts, &seed, hours)
                .map_err(|e| e.to_string())?;
            build_shock_surrogate(&corpus, &consts, &shock_opts).map_err(|e| e.to_string())?
        }
        (VariantArg::Original, None, Some(path)) => {
            let traj = read_trajectory(&path)?;
            fit_original_net(&[traj], &consts, &FitOptions::default()).map_err(|e| e.to_string())?
        }
        (VariantArg::Shock, None, Some(path)) => {
            let set = ShockTrainingSet {
                with_shock: vec![read_trajectory(&path.join("shocked"))?],
                without_shock: vec![read_trajectory(&path.join("nominal"))?],
            };
            build_shock_surrogate(&set, &consts, &shock_opts).map_err(|e| e.to_string())?
        }
        (_, None, None) => return Err("provide a data directory or --synthesize HOURS".into()),
    };
    let ck = Checkpoint::new(net, Vec::new(), reports.clone());
    let path = dir.join("surrogate_checkpoint.json");
    std::fs::write(&path, ck.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    write_json(&dir.join("fit_report.json"), &reports).map_err(|e| e.to_string())?;
    Ok(dir)
}

/// Study config for the `sobol` subcommand.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyConfig {
    /// Checkpoint to analyze; when absent a surrogate of `variant` is fitted
    /// from scratch.
    checkpoint: Option<PathBuf>,
    #[serde(default)]
    variant: Option<String>,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    outputs: Vec<String>,
    #[serde(default = "default_halfwidth")]
    halfwidth: f64,
}

fn default_n() -> usize {
    1 << 13
}
fn default_threshold() -> f64 {
    0.10
}
fn default_halfwidth() -> f64 {
    0.5
}

fn cmd_sobol(study_path: &Path, common: &CommonOpts) -> Result<PathBuf, String> {
    let text = std::fs::read_to_string(study_path)
        .map_err(|e| format!("{}: {e}", study_path.display()))?;
    let sc: StudyConfig = toml::from_str(&text).map_err(|e| e.to_string())?;
    let consts = PlantConstants::default();
    let seed = SeedTree::new(common.seed.unwrap_or(1234));
    let net = if let Some(ck) = &sc.checkpoint {
        let text = std::fs::read_to_string(ck).map_err(|e| e.to_string())?;
        Checkpoint::from_json(&text).map_err(|e| e.to_string())?.net
    } else {
        match sc.variant.as_deref() {
            Some("shock") => fhr_twin::runtime::prep::prepare_shock_net(&consts, &seed, 21)
                .map_err(|e| e.to_string())?
                .0,
            _ => fhr_twin::runtime::prep::prepare_original_net(&consts, &seed, 36)
                .map_err(|e| e.to_string())?
                .0,
        }
    };
    let outputs: Vec<VarId> = if sc.outputs.is_empty() {
        vec![VarId::QDotRx]
    } else {
        sc.outputs
            .iter()
            .map(|n| VarId::from_name(n).ok_or_else(|| format!("unknown output {n}")))
            .collect::<Result<_, _>>()?
    };
    let mut refs = Vec::new();
    for name in ["I", "II"] {
        if let Some(bi) = net.block_index(name) {
            refs.extend(net.point_coef_refs(bi));
        }
    }
    let study = fhr_twin::sobol::run_surrogate_study(
        &net,
        &refs,
        &outputs,
        sc.halfwidth,
        sc.n,
        &consts,
        &seed.child("sobol"),
        true,
    )
    .map_err(|e| e.to_string())?;

    let dir = out_dir(common, "sobol");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    write_json(&dir.join("study.json"), &study).map_err(|e| e.to_string())?;
    {
        let mut w = csv::Writer::from_path(dir.join("study.csv")).map_err(|e| e.to_string())?;
        w.write_record([
            "output",
            "parameter",
            "s_first",
            "s_first_lo",
            "s_first_hi",
            "s_total",
            "s_total_lo",
            "s_total_hi",
        ])
        .map_err(|e| e.to_string())?;
        for (oi, out) in study.outputs.iter().enumerate() {
            for (p, label) in study.parameter_labels.iter().enumerate() {
                let e = &study.estimates[oi][p];
                w.write_record([
                    out.name().to_string(),
                    label.clone(),
                    format!("{}", e.first),
                    format!("{}", e.first_ci.0),
                    format!("{}", e.first_ci.1),
                    format!("{}", e.total),
                    format!("{}", e.total_ci.0),
                    format!("{}", e.total_ci.1),
                ])
                .map_err(|e| e.to_string())?;
            }
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    if formats(common).iter().any(|f| f == "svg") {
        fhr_twin::runtime::plots::sensitivity_figure(&study, &dir.join("study.svg"))
            .map_err(|e| e.to_string())?;
    }
    let selection = study.select(sc.threshold, &[]);
    write_json(
        &dir.join("selection.json"),
        &serde_json::json!({
            "threshold": sc.threshold,
            "selection": selection.as_deref().ok(),
            "error": selection.err().map(|e| e.to_string()),
        }),
    )
    .map_err(|e| e.to_string())?;
    Ok(dir)
}

fn cmd_compress(net_path: &Path, common: &CommonOpts) -> Result<PathBuf, String> {
    let text = std::fs::read_to_string(net_path).map_err(|e| e.to_string())?;
    let ck = Checkpoint::from_json(&text).map_err(|e| e.to_string())?;
    let consts = PlantConstants::default();
    let mut rng = SeedTree::new(common.seed.unwrap_or(0)).rng();
    let primary = fhr_twin::pump::DegradationModel::new(
        DegradationParams::primary_demo(),
        consts.primary_pump.rated_flow,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let secondary = fhr_twin::pump::DegradationModel::new(
        DegradationParams::secondary_demo(),
        consts.secondary_pump.rated_flow,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let model = fhr_twin::operator::compress_surrogate(
        &ck.net,
        &primary,
        &secondary,
        &SamplingPlan::default(),
        &consts,
        true,
    )
    .map_err(|e| e.to_string())?;
    let dir = out_dir(common, "compress");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    write_json(&dir.join("hourly_model.json"), &model).map_err(|e| e.to_string())?;
    write_json(&dir.join("compression_report.json"), &model.report).map_err(|e| e.to_string())?;
    Ok(dir)
}

fn cmd_demo_short_term(common: &CommonOpts) -> Result<PathBuf, String> {
    let seed = common.seed.unwrap_or(42);
    let root = out_dir(common, "short-term");
    let mut summaries = Vec::new();
    for beta in [720usize, 50] {
        let config = demos::demo_short_term(beta, seed);
        let prep = prepare_scenario(&config).map_err(|e| e.to_string())?;
        let log = run_prepared(&config, &prep).map_err(|e| e.to_string())?;
        let dir = root.join(format!("beta{beta}"));
        emit_outputs(&log, &dir, &formats(common)).map_err(|e| e.to_string())?;
        let mut err = 0.0;
        for (a, b) in log.truth.iter().zip(&log.virtual_mean) {
            err += (a[VarId::QDotRx] - b[VarId::QDotRx]).abs() / a[VarId::QDotRx].abs().max(1.0);
        }
        summaries.push(serde_json::json!({
            "beta_steps": beta,
            "mean_core_power_error_pct": 100.0 * err / log.truth.len().max(1) as f64,
        }));
    }
    write_json(&root.join("comparison.json"), &summaries).map_err(|e| e.to_string())?;
    Ok(root)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<PathBuf, String> = match cli.command {
        Command::Run {
            config,
            common,
            emit_config_schema,
        } => {
            if let Some(path) = emit_config_schema {
                return match write_json(&path, &config_schema_json()) {
                    Ok(()) => {
                        println!("wrote config schema to {}", path.display());
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(e),
                };
            }
            ScenarioConfig::from_toml_file(&config)
                .map_err(|e| e.to_string())
                .and_then(|cfg| run_and_emit(cfg, &common))
        }
        Command::Demo { which } => match which {
            DemoCommand::LongTerm { months, common } => run_and_emit(
                demos::demo_long_term(months, common.seed.unwrap_or(42)),
                &common,
            ),
            DemoCommand::ShortTerm { common } => cmd_demo_short_term(&common),
            DemoCommand::Shock { common } => {
                run_and_emit(demos::demo_shock(common.seed.unwrap_or(42)), &common)
            }
        },
        Command::FitSurrogate {
            data,
            variant,
            synthesize,
            common,
        } => cmd_fit(data, variant, synthesize, &common),
        Command::Sobol {
            study_config,
            common,
        } => cmd_sobol(&study_config, &common),
        Command::Compress { net, common } => cmd_compress(&net, &common),
    };
    match result {
        Ok(dir) => {
            println!("artifacts written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
