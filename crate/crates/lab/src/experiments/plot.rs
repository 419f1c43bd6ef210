//! Minimal self-contained SVG line charts plus CSV sidecars. Output is a pure
//! function of the input series, so re-runs are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

use super::sweeps::SweepResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders one or more series as an SVG line chart with circle markers.
pub fn svg_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[PlotSeries],
) -> Result<String> {
    if series.is_empty()
        || series
            .iter()
            .any(|s| s.x.is_empty() || s.x.len() != s.y.len())
    {
        return Err(LabError::InvalidSpec(
            "plot needs nonempty, aligned series".into(),
        ));
    }
    let all_x = series.iter().flat_map(|s| s.x.iter().copied());
    let all_y = series.iter().flat_map(|s| s.y.iter().copied());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in all_x {
        x_min = x_min.min(v);
        x_max = x_max.max(v);
    }
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in all_y {
        y_min = y_min.min(v);
        y_max = y_max.max(v);
    }
    if !(x_min.is_finite() && y_min.is_finite()) {
        return Err(LabError::InvalidSpec("non-finite plot data".into()));
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let px =
        |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let py = |y: f64| {
        HEIGHT
            - MARGIN_BOTTOM
            - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    };

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>",
        WIDTH / 2.0
    )
    .unwrap();

    // Axes.
    let (x0, y0) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{:.1}\" y2=\"{y0}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    )
    .unwrap();
    writeln!(
        svg,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN_TOP}\" stroke=\"black\"/>"
    )
    .unwrap();
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x_min + t * (x_max - x_min);
        let yv = y_min + t * (y_max - y_min);
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            px(xv),
            y0 + 18.0,
            fmt_tick(xv)
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            x0 - 6.0,
            py(yv) + 4.0,
            fmt_tick(yv)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{x_label}</text>",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {:.1})\">{y_label}</text>",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0
    )
    .unwrap();

    for (si, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let mut path = String::new();
        for (xv, yv) in s.x.iter().zip(&s.y) {
            if path.is_empty() {
                write!(path, "M {:.2} {:.2}", px(*xv), py(*yv)).unwrap();
            } else {
                write!(path, " L {:.2} {:.2}", px(*xv), py(*yv)).unwrap();
            }
        }
        writeln!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
        )
        .unwrap();
        for (xv, yv) in s.x.iter().zip(&s.y) {
            writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                px(*xv),
                py(*yv)
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN_RIGHT - 150.0,
            MARGIN_TOP + 16.0 * (si as f64 + 1.0),
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes one SVG and one CSV per sweep into `out_dir`; returns the created
/// paths. Fails before writing anything if any sweep is empty.
pub fn emit_plots(results: &[(String, SweepResult)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(LabError::InvalidSpec("no results to plot".into()));
    }
    for (name, sweep) in results {
        if sweep.axis.is_empty() {
            return Err(LabError::InvalidSpec(format!("sweep {name} is empty")));
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, sweep) in results {
        let svg = svg_line_chart(
            name,
            &sweep.axis_label,
            &sweep.value_label,
            &[PlotSeries {
                label: sweep.value_label.clone(),
                x: sweep.axis.clone(),
                y: sweep.values.clone(),
            }],
        )?;
        let svg_path = out_dir.join(format!("{name}.svg"));
        fs::write(&svg_path, svg)?;
        written.push(svg_path);
        let csv_path = out_dir.join(format!("{name}.csv"));
        fs::write(&csv_path, sweep.to_csv())?;
        written.push(csv_path);
    }
    Ok(written)
}
