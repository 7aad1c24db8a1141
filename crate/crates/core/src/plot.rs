//! Minimal SVG line and strip plots. Output is a pure function of the input,
//! so plots are byte-identical across runs.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const PANEL_GAP: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f2937", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

/// One polyline in a panel.
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub dashed: bool,
}

/// A stack of panels sharing the time axis.
pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub times: &'a [f64],
    /// `(y axis label, series)` per panel.
    pub panels: Vec<(String, Vec<Series<'a>>)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Roughly five round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

impl LinePlot<'_> {
    pub fn to_svg(&self) -> String {
        let n = self.panels.len().max(1) as f64;
        let height = MARGIN_TOP + n * PANEL_HEIGHT + (n - 1.0) * PANEL_GAP + 50.0;
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let (t0, t1) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) if b > a => (a, b),
            (Some(&a), _) => (a, a + 1.0),
            _ => (0.0, 1.0),
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );
        for (p, (y_label, series)) in self.panels.iter().enumerate() {
            let top = MARGIN_TOP + p as f64 * (PANEL_HEIGHT + PANEL_GAP);
            let (lo, hi) = bounds(series.iter().flat_map(|s| s.values.iter()));
            let px = |t: f64| MARGIN_LEFT + (t - t0) / (t1 - t0) * plot_w;
            let py = |v: f64| top + PANEL_HEIGHT - (v - lo) / (hi - lo) * PANEL_HEIGHT;
            let _ = writeln!(
                s,
                r##"<rect x="{MARGIN_LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="#999"/>"##
            );
            for v in ticks(lo, hi) {
                let y = py(v);
                let _ = writeln!(
                    s,
                    r##"<line x1="{}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="#999"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                    MARGIN_LEFT - 5.0,
                    MARGIN_LEFT - 8.0,
                    y + 4.0,
                    fmt_tick(v)
                );
            }
            for t in ticks(t0, t1) {
                let x = px(t);
                let _ = writeln!(
                    s,
                    r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#999"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                    top + PANEL_HEIGHT,
                    top + PANEL_HEIGHT + 5.0,
                    top + PANEL_HEIGHT + 18.0,
                    fmt_tick(t)
                );
            }
            let _ = writeln!(
                s,
                r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
                top + PANEL_HEIGHT / 2.0,
                escape(y_label)
            );
            for (k, series) in series.iter().enumerate() {
                let color = COLORS[k % COLORS.len()];
                let mut pts = String::new();
                for (t, v) in self.times.iter().zip(series.values) {
                    if v.is_finite() {
                        let _ = write!(pts, "{:.2},{:.2} ", px(*t), py(*v));
                    }
                }
                let dash = if series.dashed { r#" stroke-dasharray="6 3""# } else { "" };
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{}"/>"#,
                    pts.trim_end()
                );
                let ly = top + 14.0 + 16.0 * k as f64;
                let lx = WIDTH - MARGIN_RIGHT - 150.0;
                let _ = writeln!(
                    s,
                    r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                    lx + 24.0,
                    lx + 30.0,
                    ly + 4.0,
                    escape(series.label)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            height - 12.0,
            escape(self.x_label)
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Points of each group scattered around its column, with a median bar.
pub fn strip_plot(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let height = MARGIN_TOP + PANEL_HEIGHT * 1.5 + 60.0;
    let plot_h = PANEL_HEIGHT * 1.5;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let (lo, hi) = bounds(groups.iter().flat_map(|g| g.1.iter()));
    let py = |v: f64| MARGIN_TOP + plot_h - (v - lo) / (hi - lo) * plot_h;
    let col_w = plot_w / groups.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>"##
    );
    for v in ticks(lo, hi) {
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="#999"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (g, (label, values)) in groups.iter().enumerate() {
        let cx = MARGIN_LEFT + (g as f64 + 0.5) * col_w;
        let color = COLORS[(g + 1) % COLORS.len()];
        let n = values.len();
        for (k, v) in values.iter().enumerate() {
            // spread points evenly across a band instead of random jitter
            let dx = if n > 1 { (k as f64 / (n - 1) as f64 - 0.5) * col_w * 0.4 } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" fill-opacity="0.7"/>"#,
                cx + dx,
                py(*v)
            );
        }
        if let Some(m) = crate::spikes::median(values) {
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#111" stroke-width="2"/>"##,
                cx - col_w * 0.3,
                py(m),
                cx + col_w * 0.3,
                py(m)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h + 20.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
