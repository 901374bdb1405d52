//! Minimal SVG line plots with optional logarithmic axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
            dashed: false,
        }
    }

    /// Reference line `y = y0 (x / x0)^slope` across `[x0, x1]`.
    pub fn slope_guide(slope: f64, x0: f64, x1: f64, y0: f64) -> Self {
        Series {
            name: format!("slope {slope}"),
            points: vec![(x0, y0), (x1, y0 * (x1 / x0).powf(slope))],
            dashed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn log_log(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: true,
            log_y: true,
            series: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Series) -> &mut Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> Option<((f64, f64), (f64, f64))> {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| {
            x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0)
        });
        let mut b: Option<((f64, f64), (f64, f64))> = None;
        for &(x, y) in pts {
            let (x, y) = (axis(x, self.log_x), axis(y, self.log_y));
            b = Some(match b {
                None => ((x, x), (y, y)),
                Some(((x0, x1), (y0, y1))) => ((x0.min(x), x1.max(x)), (y0.min(y), y1.max(y))),
            });
        }
        b.map(|((x0, x1), (y0, y1))| (pad(x0, x1), pad(y0, y1)))
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
            escape(&self.title)
        );
        let (pw, ph) = (WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B);
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        let Some(((x0, x1), (y0, y1))) = self.bounds() else {
            s.push_str("</svg>\n");
            return s;
        };
        let px = |x: f64| MARGIN_L + (axis(x, self.log_x) - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_T + ph - (axis(y, self.log_y) - y0) / (y1 - y0) * ph;

        for (v, pos) in ticks(x0, x1, self.log_x) {
            let x = MARGIN_L + (pos - x0) / (x1 - x0) * pw;
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{MARGIN_T}" stroke="#ddd"/><text x="{x:.1}" y="{}" text-anchor="middle">{}</text>"##,
                MARGIN_T + ph,
                MARGIN_T + ph + 16.0,
                tick_label(v)
            );
        }
        for (v, pos) in ticks(y0, y1, self.log_y) {
            let y = MARGIN_T + ph - (pos - y0) / (y1 - y0) * ph;
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                MARGIN_L + pw,
                MARGIN_L - 6.0,
                y + 4.0,
                tick_label(v)
            );
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = if series.dashed { "#555" } else { COLORS[k % COLORS.len()] };
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0))
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            let dash = if series.dashed { r#" stroke-dasharray="6,3,1,3""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                pts.join(" ")
            );
            if !series.dashed {
                for p in &pts {
                    let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = MARGIN_T + 14.0 + 18.0 * k as f64;
            let lx = MARGIN_L + pw + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 22.0,
                lx + 28.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn axis(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let d = 0.05 * (hi - lo);
        (lo - d, hi + d)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Tick values and their axis positions.
fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, f64)> {
    if log {
        let (a, b) = (lo.ceil() as i32, hi.floor() as i32);
        let step = ((b - a) / 6 + 1).max(1);
        (a..=b).step_by(step as usize).map(|e| (10f64.powi(e), e as f64)).collect()
    } else {
        let raw = (hi - lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(raw);
        let mut v = (lo / step).ceil() * step;
        let mut out = Vec::new();
        while v <= hi {
            out.push((v, v));
            v += step;
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_legend() {
        let mut p = Plot::log_log("errors", "N", "error");
        p.push(Series::new("gmls", vec![(100.0, 1e-2), (400.0, 2.5e-3), (1600.0, 6e-4)]));
        p.push(Series::slope_guide(-1.0, 100.0, 1600.0, 1e-2));
        let svg = p.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("gmls") && svg.contains("slope -1"));
    }

    #[test]
    fn empty_and_nonpositive_data() {
        let mut p = Plot::log_log("t", "x", "y");
        assert!(p.to_svg().contains("</svg>"));
        p.push(Series::new("bad", vec![(0.0, 1.0), (1.0, -1.0)]));
        assert!(!p.to_svg().contains("NaN"));
    }
}
