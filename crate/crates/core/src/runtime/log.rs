//! Run records and file emission: CSV time series with a fixed column
//! schema, a JSON event stream, governor/health/assimilation logs, and plan
//! files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::operator::OperatorPlan;
use crate::pump::PumpHealthState;
use crate::state::{SystemState, VarId};

use super::RuntimeError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssimilationRecord {
    pub t: f64,
    /// Raw measurement vector.
    pub measurement: Vec<f64>,
    /// |mean - d| on observed rows before/after the update (filter space).
    pub pre_distance: Vec<f64>,
    pub post_distance: Vec<f64>,
    /// Ensemble variance of the observed rows after the update.
    pub observed_variance: Vec<f64>,
    /// Assimilated parameter means and variances.
    pub theta_mean: Vec<f64>,
    pub theta_variance: Vec<f64>,
    /// Members re-drawn after divergence during prediction since the last
    /// record.
    pub diverged_members: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GovernorRecord {
    pub t: f64,
    pub target: f64,
    pub admissible: f64,
    pub kappa: f64,
    pub binding: Option<String>,
    /// Setpoint actually applied to the plant (equals `admissible` unless an
    /// alarm forced a hold).
    pub applied: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t: f64,
    pub month_index: usize,
    pub plan: OperatorPlan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    MaintenanceScheduled { primary: bool, secondary: bool },
    ShutdownStart,
    MaintenanceComplete { primary: bool, secondary: bool },
    Resume,
    ShockInjected { delta_t: f64, envelope_exceeded: bool },
    GovernorAlarm { detail: String },
    MembersRedrawn { count: usize },
    Halted { detail: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Everything one closed-loop run produces.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub name: String,
    pub seed: u64,
    pub decimation_steps: usize,
    pub dt: f64,
    /// Decimated truth states.
    pub truth: Vec<SystemState>,
    /// Decimated virtual (ensemble-mean) states, aligned with `truth`.
    pub virtual_mean: Vec<SystemState>,
    /// Applied setpoint aligned with the decimated series.
    pub applied_setpoint: Vec<f64>,
    /// Demand (hourly target) aligned with the decimated series.
    pub demand: Vec<f64>,
    pub truth_health: Vec<PumpHealthState>,
    pub virtual_health: Vec<PumpHealthState>,
    pub assimilation: Vec<AssimilationRecord>,
    pub governor: Vec<GovernorRecord>,
    pub plans: Vec<PlanRecord>,
    pub events: Vec<Event>,
    /// Labels of the assimilated parameter vector.
    pub theta_labels: Vec<String>,
}

impl RunLog {
    /// Internal consistency: timestamps strictly increase and every governor
    /// decision carries an applied setpoint.
    pub fn check_invariants(&self) -> Result<(), RuntimeError> {
        for (name, series) in [("truth", &self.truth), ("virtual", &self.virtual_mean)] {
            for (i, w) in series.windows(2).enumerate() {
                if w[1][VarId::T] <= w[0][VarId::T] {
                    return Err(RuntimeError::Log(format!(
                        "non-increasing timestamps in {name} at row {i}: {} -> {}",
                        w[0][VarId::T],
                        w[1][VarId::T]
                    )));
                }
            }
        }
        for w in self.governor.windows(2) {
            if w[1].t <= w[0].t {
                return Err(RuntimeError::Log("non-increasing governor records".into()));
            }
        }
        if self.governor.iter().any(|g| !g.applied.is_finite()) {
            return Err(RuntimeError::Log(
                "governor decision without applied setpoint".into(),
            ));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// Write a state series as CSV: time first, then every variable in
/// alphabetical id order.
pub fn write_state_csv(path: &Path, series: &[SystemState]) -> Result<(), RuntimeError> {
    let order = VarId::csv_order();
    let mut w = csv::Writer::from_path(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    let mut header = vec!["t".to_string()];
    header.extend(order.iter().map(|v| v.name().to_string()));
    w.write_record(&header).map_err(|e| RuntimeError::Io(e.to_string()))?;
    for sys in series {
        let mut rec = Vec::with_capacity(order.len() + 1);
        rec.push(format_f64(sys[VarId::T]));
        for v in &order {
            rec.push(format_f64(sys[*v]));
        }
        w.write_record(&rec).map_err(|e| RuntimeError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RuntimeError::Io(e.to_string()))?;
    Ok(())
}

/// Parse a state-series CSV written by [`write_state_csv`].
pub fn read_state_csv(path: &Path) -> Result<Vec<SystemState>, RuntimeError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    let headers = r
        .headers()
        .map_err(|e| RuntimeError::Io(e.to_string()))?
        .clone();
    let ids: Vec<Option<VarId>> = headers.iter().map(VarId::from_name).collect();
    if headers.get(0) != Some("t") {
        return Err(RuntimeError::Log("first column must be t".into()));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| RuntimeError::Io(e.to_string()))?;
        let mut sys = SystemState::zeros();
        for (i, field) in row.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| RuntimeError::Log(format!("bad number {field}")))?;
            match (i, ids.get(i).copied().flatten()) {
                (0, _) => sys[VarId::T] = value,
                (_, Some(id)) => sys[id] = value,
                (_, None) => {
                    return Err(RuntimeError::Log(format!(
                        "unknown column {}",
                        headers.get(i).unwrap_or("?")
                    )))
                }
            }
        }
        out.push(sys);
    }
    Ok(out)
}

/// Round-trippable float formatting.
fn format_f64(v: f64) -> String {
    let mut buffer = ryu_format(v);
    if buffer.is_empty() {
        buffer = format!("{v:?}");
    }
    buffer
}

fn ryu_format(v: f64) -> String {
    // `{:?}` on f64 prints the shortest representation that round-trips.
    format!("{v:?}")
}

/// Write the hourly demand / applied-setpoint series.
pub fn write_target_csv(
    path: &Path,
    truth: &[SystemState],
    demand: &[f64],
    applied: &[f64],
) -> Result<(), RuntimeError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    w.write_record(["t", "demand", "applied_setpoint"])
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    for (i, sys) in truth.iter().enumerate() {
        w.write_record([
            format_f64(sys[VarId::T]),
            format_f64(demand.get(i).copied().unwrap_or(f64::NAN)),
            format_f64(applied.get(i).copied().unwrap_or(f64::NAN)),
        ])
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RuntimeError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_health_csv(path: &Path, series: &[PumpHealthState]) -> Result<(), RuntimeError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    w.write_record(PumpHealthState::csv_header())
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    for h in series {
        let rec: Vec<String> = h.to_vec().iter().map(|v| format_f64(*v)).collect();
        w.write_record(&rec).map_err(|e| RuntimeError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RuntimeError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_governor_csv(path: &Path, records: &[GovernorRecord]) -> Result<(), RuntimeError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    w.write_record(["t", "target", "admissible", "kappa", "binding", "applied"])
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    for g in records {
        w.write_record([
            format_f64(g.t),
            format_f64(g.target),
            format_f64(g.admissible),
            format_f64(g.kappa),
            g.binding.clone().unwrap_or_default(),
            format_f64(g.applied),
        ])
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RuntimeError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_assimilation_csv(
    path: &Path,
    records: &[AssimilationRecord],
    theta_labels: &[String],
) -> Result<(), RuntimeError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    let mut header = vec!["t".to_string(), "pre_distance".into(), "post_distance".into()];
    for l in theta_labels {
        header.push(format!("mean:{l}"));
    }
    for l in theta_labels {
        header.push(format!("var:{l}"));
    }
    w.write_record(&header).map_err(|e| RuntimeError::Io(e.to_string()))?;
    for r in records {
        let mut rec = vec![
            format_f64(r.t),
            format_f64(r.pre_distance.iter().fold(0.0f64, |a, b| a.max(*b))),
            format_f64(r.post_distance.iter().fold(0.0f64, |a, b| a.max(*b))),
        ];
        rec.extend(r.theta_mean.iter().map(|v| format_f64(*v)));
        rec.extend(r.theta_variance.iter().map(|v| format_f64(*v)));
        w.write_record(&rec).map_err(|e| RuntimeError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| RuntimeError::Io(e.to_string()))?;
    Ok(())
}

/// Emitted artifact paths.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct EmittedFiles {
    pub files: Vec<PathBuf>,
}

/// Persist a run log into a directory: CSV series, JSON event stream and
/// plans, and the SVG figure set.
pub fn emit_outputs(log: &RunLog, dir: &Path, formats: &[String]) -> Result<EmittedFiles, RuntimeError> {
    if log.is_empty() {
        return Err(RuntimeError::Log("empty run log".into()));
    }
    log.check_invariants()?;
    std::fs::create_dir_all(dir).map_err(|e| RuntimeError::Io(e.to_string()))?;
    let mut emitted = EmittedFiles::default();
    let mut push = |p: PathBuf| emitted.files.push(p);

    if formats.iter().any(|f| f == "csv") {
        let truth = dir.join("truth.csv");
        write_state_csv(&truth, &log.truth)?;
        push(truth);
        let virt = dir.join("virtual.csv");
        write_state_csv(&virt, &log.virtual_mean)?;
        push(virt);
        let targets = dir.join("targets.csv");
        write_target_csv(&targets, &log.truth, &log.demand, &log.applied_setpoint)?;
        push(targets);
        let th = dir.join("health_truth.csv");
        write_health_csv(&th, &log.truth_health)?;
        push(th);
        let vh = dir.join("health_virtual.csv");
        write_health_csv(&vh, &log.virtual_health)?;
        push(vh);
        let gov = dir.join("governor.csv");
        write_governor_csv(&gov, &log.governor)?;
        push(gov);
        let asm = dir.join("assimilation.csv");
        write_assimilation_csv(&asm, &log.assimilation, &log.theta_labels)?;
        push(asm);
    }
    if formats.iter().any(|f| f == "json") {
        let events = dir.join("events.json");
        write_json(&events, &log.events)?;
        push(events);
        let plans = dir.join("plans.json");
        write_json(&plans, &log.plans)?;
        push(plans);
        let assim = dir.join("assimilation.json");
        write_json(&assim, &log.assimilation)?;
        push(assim);
    }
    if formats.iter().any(|f| f == "svg") {
        let figures = super::plots::emit_run_figures(log, dir)?;
        for f in figures {
            push(f);
        }
    }
    Ok(emitted)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RuntimeError> {
    let mut f = std::fs::File::create(path).map_err(|e| RuntimeError::Io(e.to_string()))?;
    let text = serde_json::to_string_pretty(value).map_err(|e| RuntimeError::Io(e.to_string()))?;
    f.write_all(text.as_bytes())
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantState;

    #[test]
    fn state_csv_roundtrips_numerically() {
        let consts = crate::plant::PlantConstants::default();
        let mut series = Vec::new();
        for i in 0..5 {
            let mut st = PlantState::commissioning(0.8, 1.0, 1.0, &consts).sys;
            st[VarId::T] = i as f64 * 5.0 + 0.1234567890123;
            st[VarId::QDotRx] *= 1.0 + 1e-13 * i as f64;
            series.push(st);
        }
        let dir = std::env::temp_dir().join("fhr_twin_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        write_state_csv(&path, &series).unwrap();
        let back = read_state_csv(&path).unwrap();
        assert_eq!(back.len(), series.len());
        for (a, b) in series.iter().zip(&back) {
            assert_eq!(a.0, b.0);
        }
    }

    #[test]
    fn empty_log_is_rejected() {
        let log = RunLog::default();
        let dir = std::env::temp_dir().join("fhr_twin_empty_log");
        assert!(matches!(
            emit_outputs(&log, &dir, &["csv".into()]),
            Err(RuntimeError::Log(_))
        ));
    }
}
