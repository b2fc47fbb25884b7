use std::path::Path;

use hrma_core::quantize::rate_shape;
use plotters::prelude::*;

use crate::study::LevelSummary;

/// `sup_error` against `N` on log-log axes, with the fitted `C·log N / N`
/// curve when available.
pub fn sup_error_plot(path: &Path, rows: &[LevelSummary], fitted_c: Option<f64>) -> std::io::Result<()> {
    draw(path, rows, fitted_c).map_err(|e| std::io::Error::other(e.to_string()))
}

fn draw(path: &Path, rows: &[LevelSummary], fitted_c: Option<f64>) -> Result<(), Box<dyn std::error::Error>> {
    let n_lo = rows.first().map_or(1.0, |r| r.level as f64) / 1.5;
    let n_hi = rows.last().map_or(2.0, |r| r.level as f64) * 1.5;
    let mut e: Vec<f64> = rows.iter().map(|r| r.sup_error.max(f64::MIN_POSITIVE)).collect();
    if let Some(c) = fitted_c {
        e.extend(rows.iter().map(|r| c * rate_shape::<f64>(r.level)));
    }
    let e_lo = e.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
    let e_hi = e.iter().cloned().fold(0.0, f64::max) * 2.0;

    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .build_cartesian_2d((n_lo..n_hi).log_scale(), (e_lo..e_hi).log_scale())?;
    chart.configure_mesh().disable_mesh().draw()?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.level as f64, r.sup_error)).collect();
    chart.draw_series(LineSeries::new(points.clone(), &BLUE))?;
    chart.draw_series(points.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))?;
    if let Some(c) = fitted_c {
        let k = 64;
        let curve = (0..=k).map(|i| {
            let n = n_lo * (n_hi / n_lo).powf(i as f64 / k as f64);
            (n, c * n.ln() / n)
        });
        chart.draw_series(LineSeries::new(curve, &RED))?;
    }
    root.present()?;
    Ok(())
}
