//! Plain-text SVG line charts from CSV columns.

use std::fmt::Write as _;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogScale {
    pub x: bool,
    pub y: bool,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs().max(if log { 1.0 } else { 0.0 }) };
            (lo, hi) = (lo - pad, hi + pad);
        }
        Axis { lo, hi, log }
    }

    /// Position in `[0, 1]`.
    fn unit(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                let step = ((b - a) / 6 + 1) as usize;
                return (a..=b).step_by(step).map(|k| (10f64.powi(k), format!("1e{k}"))).collect();
            }
        }
        (0..=4)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                let v = if self.log { 10f64.powf(t) } else { t };
                (v, format!("{v:.3}"))
            })
            .collect()
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::Config(format!("column '{name}' not found in CSV header")))
}

/// Renders one polyline per `ys` column against `x`. Returns the SVG and the
/// number of points dropped because a log axis met a nonpositive value.
/// Missing or non-finite cells are dropped silently.
pub fn render_svg(csv_text: &str, x: &str, ys: &[String], log: LogScale) -> Result<(String, usize), CliError> {
    if ys.is_empty() {
        return Err(CliError::Config("at least one y column is required".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::Config(format!("CSV header: {e}")))?.clone();
    let xi = column(&headers, x)?;
    let yi = ys.iter().map(|c| column(&headers, c)).collect::<Result<Vec<_>, _>>()?;

    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); ys.len()];
    let mut skipped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("CSV: {e}")))?;
        let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        let Some(xv) = num(xi) else { continue };
        for (s, &c) in series.iter_mut().zip(&yi) {
            let Some(yv) = num(c) else { continue };
            if (log.x && xv <= 0.0) || (log.y && yv <= 0.0) {
                skipped += 1;
                continue;
            }
            s.push((xv, yv));
        }
    }

    let ax = Axis::new(series.iter().flatten().map(|p| p.0), log.x);
    let ay = Axis::new(series.iter().flatten().map(|p| p.1), log.y);
    let (l, r, t, b) = MARGIN;
    let (pw, ph) = (WIDTH - l - r, HEIGHT - t - b);
    let px = |v: f64| l + pw * ax.unit(v);
    let py = |v: f64| t + ph * (1.0 - ay.unit(v));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r##"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for (v, label) in ax.ticks() {
        let x = px(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##,
            t + ph,
            t + ph + 4.0
        );
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, t + ph + 16.0);
    }
    for (v, label) in ay.ticks() {
        let y = py(v);
        let _ = writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#444"/>"##, l - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, l - 6.0, y + 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        l + pw / 2.0,
        HEIGHT - 10.0,
        escape(x)
    );

    for (k, (s, name)) in series.iter().zip(ys).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = t + 14.0 + 16.0 * k as f64;
        let lx = l + pw - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 26.0, escape(name));
    }
    svg.push_str("</svg>\n");
    Ok((svg, skipped))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
