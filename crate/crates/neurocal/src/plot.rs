//! Minimal SVG emission for density curves and heatmaps. A convenience
//! exporter, not a plotting library: fixed canvas, simple axes, no styling
//! hooks.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 52.0;

const SERIES_COLORS: [&str; 6] = [
    "#2f7194", "#ec7070", "#48675a", "#ec9f7e", "#8c6bb1", "#c6bfa2",
];

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Polyline plot of one or more named series on a shared axis.
pub fn line_plot(path: &Path, title: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    if series.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(Error::InvalidData("nothing to plot".into()));
    }
    let (x_lo, x_hi) = axis_bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let (y_lo, y_hi) = axis_bounds(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    // Axes
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    );
    for (frac, value) in [(0.0, x_lo), (0.5, 0.5 * (x_lo + x_hi)), (1.0, x_hi)] {
        let x = MARGIN + frac * (WIDTH - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{value:.3}</text>"#,
            HEIGHT - MARGIN + 18.0
        );
    }
    for (frac, value) in [(0.0, y_lo), (1.0, y_hi)] {
        let y = HEIGHT - MARGIN - frac * (HEIGHT - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{value:.3}</text>"#,
            MARGIN - 6.0
        );
    }
    for (i, (label, points)) in series.iter().enumerate() {
        if points.is_empty() {
            continue;
        }
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{label}</text>"#,
            WIDTH - MARGIN + 4.0 - 120.0,
            MARGIN + 16.0 * i as f64
        );
    }
    let _ = writeln!(svg, "</svg>");
    write_file(path, &svg)
}

/// Map a unit value onto a blue-to-red ramp.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (47.0 + t * (236.0 - 47.0)) as u8;
    let g = (113.0 - t * (113.0 - 112.0)) as u8;
    let b = (148.0 - t * (148.0 - 112.0)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `values[yi][xi]` over the given cell-centre coordinates.
pub fn heatmap(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
) -> Result<()> {
    if xs.is_empty() || ys.is_empty() || values.len() != ys.len() {
        return Err(Error::InvalidData(
            "heatmap dimensions do not line up".into(),
        ));
    }
    let (v_lo, v_hi) = axis_bounds(values.iter().flatten().copied());
    let cell_w = (WIDTH - 2.0 * MARGIN) / xs.len() as f64;
    let cell_h = (HEIGHT - 2.0 * MARGIN) / ys.len() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    for (yi, row) in values.iter().enumerate() {
        if row.len() != xs.len() {
            return Err(Error::InvalidData(format!(
                "heatmap row {yi} has {} cells, expected {}",
                row.len(),
                xs.len()
            )));
        }
        for (xi, &v) in row.iter().enumerate() {
            let t = if v_hi > v_lo {
                (v - v_lo) / (v_hi - v_lo)
            } else {
                0.5
            };
            let x = MARGIN + xi as f64 * cell_w;
            // Row 0 at the bottom.
            let y = HEIGHT - MARGIN - (yi as f64 + 1.0) * cell_h;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="{}"/>"#,
                ramp(t)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x_label} ({:.2} to {:.2})</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        xs[0],
        xs[xs.len() - 1]
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{y_label} ({:.2} to {:.2})</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        ys[0],
        ys[ys.len() - 1]
    );
    let _ = writeln!(svg, "</svg>");
    write_file(path, &svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_wellformed_svg() {
        let dir = std::env::temp_dir().join("neurocal_plot");
        let line = dir.join("line.svg");
        line_plot(
            &line,
            "density",
            &[("alpha".into(), vec![(0.0, 0.1), (0.5, 1.2), (1.0, 0.3)])],
        )
        .unwrap();
        let text = std::fs::read_to_string(&line).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        assert!(text.contains("polyline"));

        let heat = dir.join("heat.svg");
        heatmap(
            &heat,
            "inequality",
            "alpha",
            "beta",
            &[0.0, 1.0],
            &[0.0, 1.0, 2.0],
            &[vec![0.0, 0.1], vec![0.5, 0.6], vec![0.9, 1.0]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&heat).unwrap();
        assert_eq!(text.matches("<rect").count(), 7, "6 cells plus background");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_ragged_heatmaps() {
        let dir = std::env::temp_dir().join("neurocal_plot_bad");
        let err = heatmap(
            &dir.join("x.svg"),
            "t",
            "x",
            "y",
            &[0.0, 1.0],
            &[0.0],
            &[vec![1.0]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("row 0"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
