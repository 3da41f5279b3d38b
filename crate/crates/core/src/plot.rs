//! Minimal SVG charts: line plots with axes and a legend, and box plots.
//! Output depends only on the data, so repeated runs are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 75.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#17becf", "#bcbd22",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal reference lines `(y, label)`.
    pub hlines: Vec<(f64, String)>,
    pub log_y: bool,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

/// Axis range and ticks on a 1-2-5 step.
fn nice_axis(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        let d = lo.abs().max(1.0) * 0.05;
        (lo - d, hi + d)
    } else {
        (lo, hi)
    };
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).floor();
    let last = (hi / step).ceil();
    let ticks: Vec<f64> = (0..=(last - first) as i64)
        .map(|i| (first + i as f64) * step)
        .collect();
    (first * step, last * step, ticks)
}

/// Decade ticks for a log axis given log10 bounds.
fn log_axis(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = if lo.is_finite() && hi.is_finite() {
        (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
    } else {
        (0.0, 1.0)
    };
    let every = ((hi - lo) / 6.0).ceil().max(1.0);
    let ticks = (0..)
        .map(|i| lo + every * f64::from(i))
        .take_while(|&t| t <= hi)
        .collect();
    (lo, hi, ticks)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a < 1e-12 {
        "0".into()
    } else if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        format!("{v:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (WIDTH - MARGIN_R + MARGIN_L) / 2.0,
        escape(title)
    );
}

fn axes(
    svg: &mut String,
    f: &Frame,
    (x_ticks, y_ticks): (&[f64], &[f64]),
    (x_label, y_label): (&str, &str),
    y_fmt: impl Fn(f64) -> String,
) {
    let (l, r) = (MARGIN_L, WIDTH - MARGIN_R);
    let (t, b) = (MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(
        svg,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for &xv in x_ticks {
        let x = f.px(xv);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="#444"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            b + 5.0,
            b + 18.0,
            tick(xv)
        );
    }
    for &yv in y_ticks {
        let y = f.py(yv);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            l - 5.0,
            l - 8.0,
            y + 4.0,
            y_fmt(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn legend(svg: &mut String, names: &[&str]) {
    let x = WIDTH - MARGIN_R + 12.0;
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            PALETTE[i % PALETTE.len()],
            x + 26.0,
            y + 4.0,
            escape(name)
        );
    }
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.max(1e-300).log10()
        } else {
            y
        }
    }

    pub fn to_svg(&self) -> String {
        let pts = || {
            self.series
                .iter()
                .flat_map(|s| s.points.iter())
                .filter(|(x, y)| x.is_finite() && y.is_finite())
        };
        let (xl, xh) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| {
            (a.min(x), b.max(x))
        });
        let ys = pts()
            .map(|&(_, y)| self.ty(y))
            .chain(self.hlines.iter().map(|(y, _)| self.ty(*y)));
        let (yl, yh) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
        let (x0, x1, x_ticks) = nice_axis(xl, xh);
        let (y0, y1, y_ticks) = if self.log_y {
            log_axis(yl, yh)
        } else {
            nice_axis(yl, yh)
        };
        let f = Frame { x0, x1, y0, y1 };

        let mut svg = String::new();
        header(&mut svg, &self.title);
        let log_y = self.log_y;
        let labels = (self.x_label.as_str(), self.y_label.as_str());
        axes(&mut svg, &f, (&x_ticks, &y_ticks), labels, |v| {
            if log_y {
                tick(10f64.powf(v))
            } else {
                tick(v)
            }
        });
        for (y, label) in &self.hlines {
            let py = f.py(self.ty(*y));
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_L}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#999" stroke-dasharray="5,4"/><text x="{}" y="{:.2}" fill="#666">{}</text>"##,
                WIDTH - MARGIN_R,
                MARGIN_L + 4.0,
                py - 4.0,
                escape(label)
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let mut d = String::new();
            for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = write!(d, "{:.2},{:.2} ", f.px(x), f.py(self.ty(y)));
            }
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.6" points="{}"/>"#,
                PALETTE[i % PALETTE.len()],
                d.trim_end()
            );
        }
        let names: Vec<&str> = self.series.iter().map(|s| s.name.as_str()).collect();
        legend(&mut svg, &names);
        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_svg())?;
        Ok(())
    }
}

/// Five-number summary: min, q1, median, q3, max (linear interpolation).
pub fn five_number(values: &[f64]) -> Option<[f64; 5]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some([v[0], q(0.25), q(0.5), q(0.75), v[v.len() - 1]])
}

/// One box per named group.
pub fn box_plot_svg(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let stats: Vec<(&str, [f64; 5])> = groups
        .iter()
        .filter_map(|(n, v)| five_number(v).map(|s| (n.as_str(), s)))
        .collect();
    let lo = stats.iter().map(|s| s.1[0]).fold(f64::INFINITY, f64::min);
    let hi = stats.iter().map(|s| s.1[4]).fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1, y_ticks) = nice_axis(lo, hi);
    let n = stats.len().max(1) as f64;
    let f = Frame {
        x0: 0.0,
        x1: n,
        y0,
        y1,
    };
    let mut svg = String::new();
    header(&mut svg, title);
    let (l, r) = (MARGIN_L, WIDTH - MARGIN_R);
    let (t, b) = (MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(
        svg,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for &yv in &y_ticks {
        let y = f.py(yv);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#444"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            l - 5.0,
            l - 8.0,
            y + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
    let half = 0.25 * (r - l) / n;
    for (i, (name, s)) in stats.iter().enumerate() {
        let cx = f.px(i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
            f.py(s[0]),
            f.py(s[4])
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="{color}"/>"#,
            cx - half,
            f.py(s[3]),
            2.0 * half,
            (f.py(s[1]) - f.py(s[3])).max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            cx - half,
            f.py(s[2]),
            cx + half,
            f.py(s[2])
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-30 {cx:.2} {y:.2})">{}</text>"#,
            escape(name),
            y = b + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
