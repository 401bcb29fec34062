//! Minimal SVG line charts. Output is a pure function of the input series
//! (fixed number formatting, no timestamps), so a chart regenerated from
//! the same CSV is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn csv_label(label: &str) -> String {
    label.replace([',', '\n', '\r'], ";")
}

impl LineChart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_x: false, series: Vec::new() }
    }

    pub fn push(&mut self, label: impl Into<String>, points: Vec<(f64, f64)>) {
        self.series.push(Series { label: label.into(), points });
    }

    fn tx(&self, x: f64) -> f64 {
        if self.log_x {
            x.max(f64::MIN_POSITIVE).log10()
        } else {
            x
        }
    }

    pub fn to_svg(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            let x = self.tx(x);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (self.tx(x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let xl = if self.log_x { 10f64.powf(xv) } else { xv };
            let xp = LEFT + f * pw;
            let _ = writeln!(
                s,
                r#"<line x1="{xp:.1}" y1="{:.1}" x2="{xp:.1}" y2="{:.1}" stroke="black"/><text x="{xp:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                tick(xl)
            );
            let yv = y0 + f * (y1 - y0);
            let yp = TOP + (1.0 - f) * ph;
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{yp:.1}" x2="{LEFT}" y2="{yp:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
            let ly = TOP + 12.0 + 18.0 * k as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                ly + 4.0,
                esc(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Long-format CSV `series,x,y` (series written as `index:label`), the
    /// input [`LineChart::from_csv`] reads back.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# title={}\n# x_label={}\n# y_label={}\n# log_x={}\n", self.title, self.x_label, self.y_label, self.log_x);
        // Series are declared up front so empty ones survive the round trip.
        for series in &self.series {
            let _ = writeln!(s, "# series={}", csv_label(&series.label));
        }
        s.push_str("series,x,y\n");
        for (k, series) in self.series.iter().enumerate() {
            for &(x, y) in &series.points {
                let _ = writeln!(s, "{k}:{},{x:e},{y:e}", csv_label(&series.label));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut chart = LineChart::new("", "", "");
        let mut header_seen = false;
        for (k, line) in text.lines().enumerate() {
            let at = || format!("line {}", k + 1);
            if let Some(meta) = line.strip_prefix("# ") {
                let (key, value) = meta.split_once('=').ok_or_else(|| Error::parse(at(), "expected `# key=value`"))?;
                match key {
                    "title" => chart.title = value.to_string(),
                    "x_label" => chart.x_label = value.to_string(),
                    "y_label" => chart.y_label = value.to_string(),
                    "log_x" => chart.log_x = value == "true",
                    "series" => chart.push(value, Vec::new()),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line.trim() != "series,x,y" {
                    return Err(Error::parse(at(), "expected header `series,x,y`"));
                }
                header_seen = true;
                continue;
            }
            let mut f = line.split(',');
            let (Some(label), Some(x), Some(y), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(Error::parse(at(), "expected three fields"));
            };
            let x: f64 = x.parse().map_err(|_| Error::parse(at(), format!("bad x `{x}`")))?;
            let y: f64 = y.parse().map_err(|_| Error::parse(at(), format!("bad y `{y}`")))?;
            let (idx, label) = label
                .split_once(':')
                .and_then(|(k, l)| Some((k.parse::<usize>().ok()?, l)))
                .ok_or_else(|| Error::parse(at(), format!("expected `index:label`, got `{label}`")))?;
            if idx == chart.series.len() {
                chart.push(label, Vec::new());
            }
            match chart.series.get_mut(idx) {
                Some(s) if s.label == label => s.points.push((x, y)),
                _ => return Err(Error::parse(at(), format!("series {idx} `{label}` was not declared"))),
            }
        }
        Ok(chart)
    }
}

/// Reads a chart CSV and writes the SVG next to it (same stem).
pub fn render_csv_file(csv_path: &Path) -> Result<std::path::PathBuf> {
    let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let chart = LineChart::from_csv(&text)?;
    let out = csv_path.with_extension("svg");
    std::fs::write(&out, chart.to_svg()).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}
