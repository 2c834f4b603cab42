//! Minimal static SVG line and box plots.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
    pub markers: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, dashed: false, markers: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    pub fn with_markers(mut self) -> Self {
        self.markers = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn unit(&self, v: f64) -> Option<f64> {
        let v = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                let value = if self.log { 10f64.powf(t) } else { t };
                (i as f64 / 4.0, format!("{value:.3}"))
            })
            .collect()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn plot_w() -> f64 {
    WIDTH - MARGIN_L - MARGIN_R
}

fn plot_h() -> f64 {
    HEIGHT - MARGIN_T - MARGIN_B
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        plot_w(),
        plot_h()
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_L + plot_w() / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w() / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        MARGIN_T + plot_h() / 2.0,
        MARGIN_T + plot_h() / 2.0,
        escape(y_label)
    );
}

fn y_ticks(out: &mut String, y: &Axis) {
    for (u, label) in y.ticks() {
        let py = MARGIN_T + plot_h() * (1.0 - u);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.1}" x2="{MARGIN_L}" y2="{py:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#,
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            py + 4.0
        );
    }
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let x = Axis::fit(all().map(|p| p.0), self.log_x);
        let y = Axis::fit(all().map(|p| p.1), self.log_y);
        let mut out = String::new();
        frame(&mut out, &self.title, &self.x_label, &self.y_label);
        y_ticks(&mut out, &y);
        for (u, label) in x.ticks() {
            let px = MARGIN_L + plot_w() * u;
            let base = MARGIN_T + plot_h();
            let _ = writeln!(
                out,
                r#"<line x1="{px:.1}" y1="{base}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" text-anchor="middle">{label}</text>"#,
                base + 5.0,
                base + 20.0
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(a, b)| {
                    Some((MARGIN_L + plot_w() * x.unit(a)?, MARGIN_T + plot_h() * (1.0 - y.unit(b)?)))
                })
                .collect();
            let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                path.join(" ")
            );
            if s.markers {
                for (a, b) in &pts {
                    let _ = writeln!(out, r#"<circle cx="{a:.2}" cy="{b:.2}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = MARGIN_T + 15.0 + 18.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Five-number summary with 1.5 IQR whiskers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let iqr = q3 - q1;
        let lower_whisker = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(v[0]);
        let upper_whisker = v.iter().rev().copied().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(v[v.len() - 1]);
        Some(Self { lower_whisker, q1, median, q3, upper_whisker })
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoxPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub groups: Vec<(String, Vec<f64>)>,
}

impl BoxPlot {
    pub fn to_svg(&self) -> String {
        let y = Axis::fit(self.groups.iter().flat_map(|g| g.1.iter().copied()), self.log_y);
        let mut out = String::new();
        frame(&mut out, &self.title, &self.x_label, &self.y_label);
        y_ticks(&mut out, &y);
        let slot = plot_w() / self.groups.len().max(1) as f64;
        let to_py = |v: f64| y.unit(v).map(|u| MARGIN_T + plot_h() * (1.0 - u));
        for (i, (label, values)) in self.groups.iter().enumerate() {
            let cx = MARGIN_L + slot * (i as f64 + 0.5);
            let half = 0.3 * slot;
            let base = MARGIN_T + plot_h();
            let _ = writeln!(
                out,
                r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#,
                base + 20.0,
                escape(label)
            );
            let Some(b) = BoxStats::from_values(values) else { continue };
            let (Some(lw), Some(q1), Some(md), Some(q3), Some(uw)) =
                (to_py(b.lower_whisker), to_py(b.q1), to_py(b.median), to_py(b.q3), to_py(b.upper_whisker))
            else {
                continue;
            };
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.1}" y1="{lw:.1}" x2="{cx:.1}" y2="{q1:.1}" stroke="black"/><line x1="{cx:.1}" y1="{q3:.1}" x2="{cx:.1}" y2="{uw:.1}" stroke="black"/>"#
            );
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{q3:.1}" width="{:.1}" height="{:.1}" fill="#cfe2f3" stroke="black"/><line x1="{:.1}" y1="{md:.1}" x2="{:.1}" y2="{md:.1}" stroke="#d62728" stroke-width="2"/>"##,
                cx - half,
                2.0 * half,
                (q1 - q3).max(0.0),
                cx - half,
                cx + half
            );
            for &v in values.iter().filter(|&&v| v < b.lower_whisker || v > b.upper_whisker) {
                if let Some(py) = to_py(v) {
                    let _ = writeln!(out, r#"<circle cx="{cx:.1}" cy="{py:.1}" r="2" fill="none" stroke="black"/>"#);
                }
            }
        }
        out.push_str("</svg>\n");
        out
    }
}
