use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{LabError, Result};

use super::sweep::SweepSummary;

fn plot_err<E: std::fmt::Display>(e: E) -> LabError {
    LabError::Io(std::io::Error::other(e.to_string()))
}

fn padded_range(values: impl Iterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad)..(hi + pad)
}

/// Line chart of divergence and error against bias magnitude, and a
/// divergence-versus-error scatter.
pub fn write_sweep_charts(summary: &SweepSummary, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut rows: Vec<_> = summary.rows.iter().filter(|r| r.error.is_none()).collect();
    rows.sort_by(|a, b| a.bias_magnitude.total_cmp(&b.bias_magnitude));
    let caption = format!("env {} / {} bias", summary.environment, summary.bias.name());

    let curves = dir.join(format!("{stem}_curves.svg"));
    {
        let root = SVGBackend::new(&curves, (960, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let panels = root.split_evenly((1, 2));
        let x_range = padded_range(rows.iter().map(|r| r.bias_magnitude));
        for (panel, (label, pick)) in panels.iter().zip([
            ("weighted policy divergence", (|r: &super::sweep::SweepRow| r.d_weighted) as fn(&_) -> f64),
            ("squared reward error", |r: &super::sweep::SweepRow| r.sq_error),
        ]) {
            let y_range = padded_range(rows.iter().map(|r| pick(r)));
            let mut chart = ChartBuilder::on(panel)
                .caption(format!("{caption}: {label}"), ("sans-serif", 16))
                .margin(10)
                .x_label_area_size(35)
                .y_label_area_size(60)
                .build_cartesian_2d(x_range.clone(), y_range)
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .x_desc("bias magnitude")
                .y_desc(label)
                .draw()
                .map_err(plot_err)?;
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.bias_magnitude, pick(r))).collect();
            chart
                .draw_series(LineSeries::new(points.clone(), &BLUE))
                .map_err(plot_err)?;
            chart
                .draw_series(points.into_iter().map(|p| Circle::new(p, 3, BLUE.filled())))
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }

    let scatter = dir.join(format!("{stem}_scatter.svg"));
    {
        let root = SVGBackend::new(&scatter, (480, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(&caption, ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(60)
            .build_cartesian_2d(
                padded_range(rows.iter().map(|r| r.d_weighted)),
                padded_range(rows.iter().map(|r| r.sq_error)),
            )
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("weighted policy divergence")
            .y_desc("squared reward error")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(
                rows.iter()
                    .map(|r| Circle::new((r.d_weighted, r.sq_error), 4, RED.filled())),
            )
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(vec![curves, scatter])
}
