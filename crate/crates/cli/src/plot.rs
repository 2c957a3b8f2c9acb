//! Three-panel SVG of return, delivered parts and collisions against environment steps.
//!
//! Output depends only on the input rows, so identical CSVs give byte-identical SVGs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::{read_csv, MetricsRow};
use crate::CliError;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 44.0;
const LEGEND_H: f64 = 28.0;

pub const PANELS: [&str; 3] = ["Episode return", "Delivered parts", "Collisions"];

/// One line per panel for one variant: `(step, [return, deliveries, collisions])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, [f64; 3])>,
}

impl Series {
    /// Averages runs point by point, truncated to the shortest run.
    pub fn mean_of(label: impl Into<String>, runs: &[Vec<MetricsRow>]) -> Self {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        let k = runs.len().max(1) as f64;
        let points = (0..len)
            .map(|i| {
                let mut v = [0.0; 3];
                for run in runs {
                    v[0] += run[i].mean_return / k;
                    v[1] += run[i].deliveries / k;
                    v[2] += run[i].collisions / k;
                }
                (runs[0][i].step as f64, v)
            })
            .collect();
        Self {
            label: label.into(),
            points,
        }
    }
}

fn color(label: &str, index: usize) -> &'static str {
    match label {
        "ab-mappo" => "#1f5fbf",
        "mappo" => "#c8302c",
        _ => ["#2a9d5c", "#8a5cc2", "#d08a1e", "#555555"][index % 4],
    }
}

fn fmt_num(x: f64) -> String {
    let a = x.abs();
    let s = if a >= 1e5 || (a > 0.0 && a < 1e-2) {
        format!("{x:.2e}")
    } else if a >= 100.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    };
    if s == "-0.00" || s == "-0" {
        s[1..].to_owned()
    } else {
        s
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render_svg(series: &[Series]) -> String {
    let width = 3.0 * PANEL_W;
    let height = PANEL_H + LEGEND_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let (x_lo, x_hi) = range(series.iter().flat_map(|r| r.points.iter().map(|p| p.0)));
    let x_lo = x_lo.max(0.0);
    for (k, title) in PANELS.iter().enumerate() {
        let ox = k as f64 * PANEL_W;
        let (y_lo, y_hi) = range(series.iter().flat_map(|r| r.points.iter().map(move |p| p.1[k])));
        let (l, r) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
        let (t, b) = (MARGIN_T, PANEL_H - MARGIN_B);
        let sx = |x: f64| l + (x - x_lo) / (x_hi - x_lo) * (r - l);
        let sy = |y: f64| b - (y - y_lo) / (y_hi - y_lo) * (b - t);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{title}</text>"#,
            (l + r) / 2.0
        );
        let _ = writeln!(
            s,
            r##"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        for i in 0..=4 {
            let y = y_lo + (y_hi - y_lo) * f64::from(i) / 4.0;
            let py = sy(y);
            let _ = writeln!(
                s,
                r##"<line x1="{l:.1}" y1="{py:.1}" x2="{r:.1}" y2="{py:.1}" stroke="#ddd"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                l - 4.0,
                py + 4.0,
                fmt_num(y)
            );
        }
        for x in [x_lo, (x_lo + x_hi) / 2.0, x_hi] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(x),
                b + 15.0,
                fmt_num(x)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">environment steps</text>"#,
            (l + r) / 2.0,
            b + 32.0
        );
        for (i, run) in series.iter().enumerate() {
            if run.points.is_empty() {
                continue;
            }
            let pts: Vec<String> = run
                .points
                .iter()
                .map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1[k])))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.6" points="{}"/>"#,
                color(&run.label, i),
                pts.join(" ")
            );
        }
    }
    for (i, run) in series.iter().enumerate() {
        let x = MARGIN_L + i as f64 * 140.0;
        let y = PANEL_H + 10.0;
        let c = color(&run.label, i);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{c}" stroke-width="3"/>"#,
            x + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 30.0,
            y + 4.0,
            escape(&run.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Run directories under `root` (including `root`) holding `metrics.csv` and `config.json`,
/// grouped by variant name.
pub fn discover_runs(root: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>, CliError> {
    if !root.is_dir() {
        return Err(CliError::MissingFile {
            flag: "--metrics",
            path: root.to_path_buf(),
        });
    }
    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let walk = walkdir::WalkDir::new(root).sort_by_file_name();
    for entry in walk {
        let entry = entry.map_err(|e| CliError::Failed(format!("{}: {e}", root.display())))?;
        if entry.file_name() != "metrics.csv" {
            continue;
        }
        let dir = entry.path().parent().unwrap_or(root);
        let cfg_path = dir.join("config.json");
        let text = std::fs::read_to_string(&cfg_path).map_err(CliError::io(&cfg_path))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
            path: cfg_path.clone(),
            source,
        })?;
        let variant = value
            .get("variant")
            .and_then(|v| v.as_str())
            .ok_or_else(|| CliError::Failed(format!("{}: no variant", cfg_path.display())))?;
        groups.entry(variant.to_owned()).or_default().push(dir.to_path_buf());
    }
    Ok(groups)
}

/// Reads every run below `root` and renders one averaged line per variant.
pub fn plot_dir(root: &Path) -> Result<(Vec<Series>, String), CliError> {
    let mut series = Vec::new();
    for (variant, dirs) in discover_runs(root)? {
        let runs = dirs
            .iter()
            .map(|d| read_csv::<MetricsRow>(&d.join("metrics.csv")))
            .collect::<Result<Vec<_>, _>>()?;
        series.push(Series::mean_of(variant, &runs));
    }
    if series.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no runs with metrics.csv found",
            root.display()
        )));
    }
    let svg = render_svg(&series);
    Ok((series, svg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, r: f64) -> MetricsRow {
        MetricsRow {
            step,
            update: step / 10,
            mean_return: r,
            deliveries: r / 2.0,
            collisions: 1.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            clip_frac: 0.0,
            approx_kl: 0.0,
        }
    }

    #[test]
    fn mean_over_seeds_truncates() {
        let a = vec![row(10, 1.0), row(20, 3.0), row(30, 9.0)];
        let b = vec![row(10, 3.0), row(20, 5.0)];
        let s = Series::mean_of("mappo", &[a, b]);
        assert_eq!(s.points, [(10.0, [2.0, 1.0, 1.0]), (20.0, [4.0, 2.0, 1.0])]);
    }

    #[test]
    fn three_panels_one_line_per_variant() {
        let series = [
            Series::mean_of("ab-mappo", &[vec![row(10, 1.0), row(20, 2.0)]]),
            Series::mean_of("mappo", &[vec![row(10, 0.5), row(20, 1.0)]]),
        ];
        let svg = render_svg(&series);
        assert_eq!(svg.matches("<polyline").count(), 6);
        for title in PANELS {
            assert!(svg.contains(title));
        }
        assert_eq!(svg, render_svg(&series));
    }

    #[test]
    fn numbers_are_compact() {
        assert_eq!(fmt_num(-0.0001), "-1.00e-4");
        assert_eq!(fmt_num(-0.0), "0.00");
        assert_eq!(fmt_num(1234.0), "1234");
        assert_eq!(fmt_num(2.5), "2.50");
    }
}
