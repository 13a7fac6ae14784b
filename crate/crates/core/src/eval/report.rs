//! CSV and SVG emitters for the evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::NewVoiceReport;

/// Write rows as CSV with the given header. Values are plain numbers or
/// identifiers, so no quoting is needed.
pub fn write_csv(path: impl AsRef<Path>, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn new_voice_report_csv(path: impl AsRef<Path>, report: &NewVoiceReport) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.new_index.to_string(),
                r.nn_index.to_string(),
                format!("{:.6}", r.dist_new_to_nn),
                r.nn2nn_index.to_string(),
                format!("{:.6}", r.dist_nn_to_nn2nn),
                (if r.dist_new_to_nn > r.dist_nn_to_nn2nn { 1 } else { 0 }).to_string(),
            ]
        })
        .collect();
    write_csv(
        path,
        "new_index,nn_index,dist_new_to_nn,nn2nn_index,dist_nn_to_nn2nn,beyond",
        &rows,
    )
}

/// A labeled point group for the scatter plot.
pub struct ScatterGroup<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a [(f64, f64)],
}

/// Self-contained SVG scatter of 2-D coordinates, one color per group.
pub fn scatter_svg(path: impl AsRef<Path>, title: &str, groups: &[ScatterGroup<'_>]) -> Result<()> {
    let (w, h, margin) = (640.0, 480.0, 50.0);
    let all: Vec<(f64, f64)> = groups.iter().flat_map(|g| g.points.iter().copied()).collect();
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &all {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    if all.is_empty() {
        min_x = 0.0;
        max_x = 1.0;
        min_y = 0.0;
        max_y = 1.0;
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let sx = |x: f64| margin + (x - min_x) / span_x * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - min_y) / span_y * (h - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>",
        w / 2.0
    );
    for (gi, g) in groups.iter().enumerate() {
        for &(x, y) in g.points {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.75\"/>",
                sx(x),
                sy(y),
                g.color
            );
        }
        let ly = 40.0 + 18.0 * gi as f64;
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            w - margin - 120.0,
            ly,
            g.color,
            w - margin - 108.0,
            ly + 4.0,
            g.label
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}
