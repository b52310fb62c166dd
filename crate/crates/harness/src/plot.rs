//! SVG line charts for a [`Summary`].

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::aggregate::{Series, Summary};
use crate::HarnessError;

pub const FIGURES: [&str; 4] = ["payoff_performance", "fairness_performance", "intrinsic_reward", "forward_loss"];

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Writes one SVG per figure into `out_dir` and returns their paths.
pub fn emit_plots(summary: &Summary, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let figures: [(&str, &str, &str, &[Series]); 4] = [
        (FIGURES[0], "Payoff performance", "cumulated payoff", &summary.payoff_performance),
        (FIGURES[1], "Fairness performance", "J-index", &summary.fairness_performance),
        (FIGURES[2], "Intrinsic reward", "intrinsic reward", &summary.intrinsic_reward),
        (FIGURES[3], "Forward model loss", "forward loss", &summary.forward_loss),
    ];
    let mut paths = Vec::new();
    for (file, title, y_label, series) in figures {
        let path = out_dir.join(format!("{file}.svg"));
        let mut svg = String::new();
        line_chart(&mut svg, title, y_label, series).map_err(|e| HarnessError::Plot(format!("{file}: {e}")))?;
        std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

type DrawResult = Result<(), Box<dyn std::error::Error>>;

fn line_chart(svg: &mut String, title: &str, y_label: &str, series: &[Series]) -> DrawResult {
    let root = SVGBackend::with_string(svg, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1.is_finite());
    if finite().next().is_none() {
        root.titled(title, ("sans-serif", 24))?;
        root.draw(&Text::new("no data", (370, 240), ("sans-serif", 20)))?;
        root.present()?;
        return Ok(());
    }
    let (mut x0, mut x1) = (usize::MAX, 0);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { y0.abs().max(1.0) * 0.05 };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0 as f64..x1 as f64, (y0 - pad)..(y1 + pad))?;
    chart.configure_mesh().x_desc("episode").y_desc(y_label).draw()?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().filter(|p| p.1.is_finite()).map(|&(x, y)| (x as f64, y)).collect();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}
