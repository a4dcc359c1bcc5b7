//! SVG figure emission mirroring the demonstration figure layouts: a
//! power/health panel pair, an error/variance panel pair, and the assimilated
//! parameter mean/variance grid, plus sensitivity bar charts.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::plant::FULL_POWER;
use crate::sobol::SobolStudy;
use crate::state::VarId;

use super::log::RunLog;
use super::RuntimeError;

fn map_err<E: std::fmt::Display>(e: E) -> RuntimeError {
    RuntimeError::Io(e.to_string())
}

fn hours(t: f64) -> f64 {
    t / 3600.0
}

/// Two-panel figure: core power tracking on top, pump health indices below.
pub fn power_health_figure(log: &RunLog, path: &Path) -> Result<(), RuntimeError> {
    let root = SVGBackend::new(path, (1100, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(map_err)?;
    let (top, bottom) = root.split_vertically(420);

    let t_end = hours(log.truth.last().map(|s| s[VarId::T]).unwrap_or(1.0)).max(1e-6);
    let mut chart = ChartBuilder::on(&top)
        .margin(10)
        .caption("Core power: demand, admissible, truth, virtual", ("sans-serif", 18))
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, 0.4..1.05)
        .map_err(map_err)?;
    chart
        .configure_mesh()
        .x_desc("time [h]")
        .y_desc("power fraction")
        .draw()
        .map_err(map_err)?;
    let frac = |w: f64| w / FULL_POWER;
    let series = |f: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
        log.truth
            .iter()
            .enumerate()
            .map(|(i, s)| (hours(s[VarId::T]), f(i)))
            .collect()
    };
    chart
        .draw_series(LineSeries::new(series(&|i| frac(log.demand[i])), &BLACK.mix(0.4)))
        .map_err(map_err)?
        .label("demand")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK.mix(0.4)));
    chart
        .draw_series(LineSeries::new(
            series(&|i| frac(log.applied_setpoint[i])),
            &BLUE,
        ))
        .map_err(map_err)?
        .label("admissible")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart
        .draw_series(LineSeries::new(
            series(&|i| frac(log.truth[i][VarId::QDotRx])),
            &RED,
        ))
        .map_err(map_err)?
        .label("plant")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    chart
        .draw_series(LineSeries::new(
            series(&|i| frac(log.virtual_mean[i][VarId::QDotRx])),
            &GREEN,
        ))
        .map_err(map_err)?
        .label("virtual")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], GREEN));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(map_err)?;

    let mut health = ChartBuilder::on(&bottom)
        .margin(10)
        .caption("Pump health index", ("sans-serif", 18))
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, 0.0..0.75)
        .map_err(map_err)?;
    health
        .configure_mesh()
        .x_desc("time [h]")
        .y_desc("eta")
        .draw()
        .map_err(map_err)?;
    let hseries = |primary: bool| -> Vec<(f64, f64)> {
        log.truth_health
            .iter()
            .map(|h| {
                (
                    hours(h.t),
                    if primary { h.primary.eta } else { h.secondary.eta },
                )
            })
            .collect()
    };
    health
        .draw_series(LineSeries::new(hseries(true), &RED))
        .map_err(map_err)?
        .label("primary")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    health
        .draw_series(LineSeries::new(hseries(false), &BLUE))
        .map_err(map_err)?
        .label("secondary")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    health
        .draw_series(LineSeries::new(
            vec![(0.0, 0.2), (t_end, 0.2)],
            BLACK.stroke_width(1),
        ))
        .map_err(map_err)?
        .label("floor")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLACK));
    health
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(map_err)?;
    root.present().map_err(map_err)?;
    Ok(())
}

/// Two-panel figure: core power percent error and observed-row ensemble
/// variance (log scale).
pub fn error_variance_figure(log: &RunLog, path: &Path) -> Result<(), RuntimeError> {
    let root = SVGBackend::new(path, (1100, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(map_err)?;
    let (top, bottom) = root.split_vertically(300);

    let t_end = hours(log.truth.last().map(|s| s[VarId::T]).unwrap_or(1.0)).max(1e-6);
    let errors: Vec<(f64, f64)> = log
        .truth
        .iter()
        .zip(&log.virtual_mean)
        .map(|(a, b)| {
            (
                hours(a[VarId::T]),
                100.0 * (b[VarId::QDotRx] - a[VarId::QDotRx]).abs() / a[VarId::QDotRx].abs().max(1.0),
            )
        })
        .collect();
    let max_err = errors.iter().map(|(_, e)| *e).fold(0.1f64, f64::max);
    let mut chart = ChartBuilder::on(&top)
        .margin(10)
        .caption("Core power percent error", ("sans-serif", 18))
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, 0.0..(1.2 * max_err))
        .map_err(map_err)?;
    chart
        .configure_mesh()
        .x_desc("time [h]")
        .y_desc("percent error")
        .draw()
        .map_err(map_err)?;
    chart
        .draw_series(LineSeries::new(errors, &RED))
        .map_err(map_err)?;

    let variances: Vec<(f64, f64)> = log
        .assimilation
        .iter()
        .map(|r| {
            let v = r
                .observed_variance
                .iter()
                .fold(0.0f64, |a, b| a.max(*b))
                .max(1e-300);
            (hours(r.t), v.log10())
        })
        .collect();
    let (lo, hi) = variances
        .iter()
        .fold((0.0f64, -30.0f64), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
    let mut vchart = ChartBuilder::on(&bottom)
        .margin(10)
        .caption("Observed-state ensemble variance", ("sans-serif", 18))
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_end, (lo - 1.0)..(hi + 1.0))
        .map_err(map_err)?;
    vchart
        .configure_mesh()
        .x_desc("time [h]")
        .y_desc("log10 variance")
        .draw()
        .map_err(map_err)?;
    vchart
        .draw_series(LineSeries::new(variances, &BLUE))
        .map_err(map_err)?;
    root.present().map_err(map_err)?;
    Ok(())
}

/// Grid of assimilated-parameter panels: ensemble mean with a +/- one-sigma
/// band.
pub fn parameter_figure(log: &RunLog, path: &Path) -> Result<(), RuntimeError> {
    let n = log.theta_labels.len().max(1);
    let cols = 2usize;
    let rows = n.div_ceil(cols);
    let root = SVGBackend::new(path, (1100, (260 * rows.max(1)) as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(map_err)?;
    let panels = root.split_evenly((rows, cols));
    for (p, label) in log.theta_labels.iter().enumerate() {
        let series: Vec<(f64, f64, f64)> = log
            .assimilation
            .iter()
            .map(|r| {
                (
                    hours(r.t),
                    r.theta_mean.get(p).copied().unwrap_or(f64::NAN),
                    r.theta_variance.get(p).copied().unwrap_or(0.0).max(0.0).sqrt(),
                )
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let t_end = series.last().unwrap().0.max(1e-6);
        let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, m, s)| {
            (lo.min(m - 3.0 * s), hi.max(m + 3.0 * s))
        });
        let pad = (hi - lo).max(1e-9) * 0.1;
        let mut chart = ChartBuilder::on(&panels[p])
            .margin(8)
            .caption(label, ("sans-serif", 14))
            .x_label_area_size(25)
            .y_label_area_size(70)
            .build_cartesian_2d(0.0..t_end, (lo - pad)..(hi + pad))
            .map_err(map_err)?;
        chart.configure_mesh().disable_mesh().draw().map_err(map_err)?;
        chart
            .draw_series(AreaSeries::new(
                series
                    .iter()
                    .map(|(t, m, s)| (*t, m + s))
                    .chain(series.iter().rev().map(|(t, m, s)| (*t, m - s)))
                    .collect::<Vec<_>>(),
                lo - pad,
                BLUE.mix(0.15),
            ))
            .map_err(map_err)?;
        chart
            .draw_series(LineSeries::new(
                series.iter().map(|(t, m, _)| (*t, *m)).collect::<Vec<_>>(),
                &BLUE,
            ))
            .map_err(map_err)?;
    }
    root.present().map_err(map_err)?;
    Ok(())
}

/// Bar chart of first/total-order indices per parameter, one panel per
/// output.
pub fn sensitivity_figure(study: &SobolStudy, path: &Path) -> Result<(), RuntimeError> {
    let d = study.parameter_labels.len();
    let rows = study.outputs.len().max(1);
    let root = SVGBackend::new(path, (1300, (330 * rows) as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(map_err)?;
    let panels = root.split_evenly((rows, 1));
    for (oi, out) in study.outputs.iter().enumerate() {
        let est = &study.estimates[oi];
        let max_v = est
            .iter()
            .map(|e| e.first.max(e.total))
            .fold(0.1f64, f64::max);
        let mut chart = ChartBuilder::on(&panels[oi])
            .margin(10)
            .caption(
                format!("Sobol indices for {}", out.name()),
                ("sans-serif", 16),
            )
            .x_label_area_size(30)
            .y_label_area_size(50)
            .build_cartesian_2d(0.0..(d as f64), -0.02..(1.1 * max_v))
            .map_err(map_err)?;
        chart
            .configure_mesh()
            .x_desc("parameter index")
            .y_desc("index")
            .draw()
            .map_err(map_err)?;
        chart
            .draw_series(est.iter().enumerate().map(|(i, e)| {
                Rectangle::new(
                    [(i as f64 + 0.1, 0.0), (i as f64 + 0.45, e.first)],
                    BLUE.filled(),
                )
            }))
            .map_err(map_err)?
            .label("first order")
            .legend(|(x, y)| Rectangle::new([(x, y - 4), (x + 10, y + 4)], BLUE.filled()));
        chart
            .draw_series(est.iter().enumerate().map(|(i, e)| {
                Rectangle::new(
                    [(i as f64 + 0.5, 0.0), (i as f64 + 0.85, e.total)],
                    RED.filled(),
                )
            }))
            .map_err(map_err)?
            .label("total order")
            .legend(|(x, y)| Rectangle::new([(x, y - 4), (x + 10, y + 4)], RED.filled()));
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(map_err)?;
    }
    root.present().map_err(map_err)?;
    Ok(())
}

/// Emit the standard figure set of one run.
pub fn emit_run_figures(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>, RuntimeError> {
    let mut out = Vec::new();
    let p1 = dir.join("power_health.svg");
    power_health_figure(log, &p1)?;
    out.push(p1);
    let p2 = dir.join("error_variance.svg");
    error_variance_figure(log, &p2)?;
    out.push(p2);
    let p3 = dir.join("parameters.svg");
    parameter_figure(log, &p3)?;
    out.push(p3);
    Ok(out)
}
