//! Minimal SVG line and scatter charts.
//!
//! Coordinate mapping: the plot area spans `[MARGIN_LEFT, WIDTH - MARGIN_RIGHT]`
//! horizontally and `[MARGIN_TOP, HEIGHT - MARGIN_BOTTOM]` vertically. A data
//! point `(x, y)` maps to
//!
//! ```text
//! px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_width
//! py = MARGIN_TOP + plot_height - (y - y_min) / (y_max - y_min) * plot_height
//! ```
//!
//! with each axis range widened to "nice" tick steps (1, 2 or 5 times a power
//! of ten). Secondary-axis series use their own y range with the same pixel
//! span. Coordinates are written with two decimals, so output is stable
//! across platforms.

use std::fmt::Write as _;

pub const WIDTH: f64 = 720.0;
pub const HEIGHT: f64 = 440.0;
pub const MARGIN_LEFT: f64 = 70.0;
pub const MARGIN_RIGHT: f64 = 70.0;
pub const MARGIN_TOP: f64 = 40.0;
pub const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = ["#1f3b73", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#566573"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Line,
    /// Horizontal then vertical segments between points.
    Step,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub kind: SeriesKind,
    pub points: Vec<(f64, f64)>,
    pub secondary: bool,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, kind: SeriesKind, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            kind,
            points,
            secondary: false,
            dashed: false,
        }
    }

    pub fn on_secondary(mut self) -> Self {
        self.secondary = true;
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y2_label: Option<String>,
    pub series: Vec<Series>,
    /// Text shown under the title, e.g. a method caveat.
    pub notices: Vec<String>,
    /// Written into a leading comment when present.
    pub generated: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

fn nice_step(span: f64, target_ticks: f64) -> f64 {
    let raw = span / target_ticks;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

impl Axis {
    /// Range covering `[lo, hi]` widened to whole tick steps.
    pub fn covering(lo: f64, hi: f64) -> Axis {
        let (lo, hi) = if !(lo.is_finite() && hi.is_finite()) {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        };
        let step = nice_step(hi - lo, 6.0);
        Axis {
            min: (lo / step).floor() * step,
            max: (hi / step).ceil() * step,
            step,
        }
    }

    pub fn ticks(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step).round() as i64;
        (0..=n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

fn plot_w() -> f64 {
    WIDTH - MARGIN_LEFT - MARGIN_RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
}

pub fn map_x(axis: &Axis, x: f64) -> f64 {
    MARGIN_LEFT + (x - axis.min) / (axis.max - axis.min) * plot_w()
}

pub fn map_y(axis: &Axis, y: f64) -> f64 {
    MARGIN_TOP + plot_h() - (y - axis.min) / (axis.max - axis.min) * plot_h()
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range<'a>(series: impl Iterator<Item = &'a Series>, f: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
    series
        .flat_map(|s| s.points.iter())
        .map(f)
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Path data for one series, `M x y L x y ...`.
pub fn path_data(series: &Series, x: &Axis, y: &Axis) -> String {
    let mut d = String::new();
    let mut prev: Option<(f64, f64)> = None;
    for &(px, py) in series.points.iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
        let (sx, sy) = (map_x(x, px), map_y(y, py));
        match prev {
            None => {
                let _ = write!(d, "M{sx:.2} {sy:.2}");
            }
            Some((_, last_y)) if series.kind == SeriesKind::Step => {
                let _ = write!(d, " L{sx:.2} {last_y:.2} L{sx:.2} {sy:.2}");
            }
            Some(_) => {
                let _ = write!(d, " L{sx:.2} {sy:.2}");
            }
        }
        prev = Some((sx, sy));
    }
    d
}

impl Chart {
    pub fn render(&self) -> String {
        let (x_lo, x_hi) = range(self.series.iter(), |p| p.0);
        let (y_lo, y_hi) = range(self.series.iter().filter(|s| !s.secondary), |p| p.1);
        let (y2_lo, y2_hi) = range(self.series.iter().filter(|s| s.secondary), |p| p.1);
        let x = Axis::covering(x_lo, x_hi);
        let y = Axis::covering(y_lo.min(0.0), y_hi);
        let y2 = Axis::covering(y2_lo.min(0.0), y2_hi);
        let has_y2 = self.series.iter().any(|s| s.secondary);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        if let Some(ts) = &self.generated {
            let _ = writeln!(out, "<!-- generated {} -->", escape(ts));
        }
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for (i, n) in self.notices.iter().enumerate() {
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" fill="#b03a2e" font-size="11">{}</text>"##,
                MARGIN_LEFT + 6.0,
                MARGIN_TOP + 14.0 + 13.0 * i as f64,
                escape(n)
            );
        }

        // axes and ticks
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
        let _ = writeln!(
            out,
            r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            plot_w(),
            plot_h()
        );
        for t in x.ticks() {
            let px = map_x(&x, t);
            let _ = writeln!(
                out,
                r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                bottom + 5.0,
                bottom + 18.0,
                fmt_tick(t, x.step)
            );
        }
        for t in y.ticks() {
            let py = map_y(&y, t);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="black"/><line x1="{left:.2}" y1="{py:.2}" x2="{right:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                left - 5.0,
                left - 8.0,
                py + 4.0,
                fmt_tick(t, y.step)
            );
        }
        if has_y2 {
            for t in y2.ticks() {
                let py = map_y(&y2, t);
                let _ = writeln!(
                    out,
                    r#"<line x1="{right:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                    right + 5.0,
                    right + 8.0,
                    py + 4.0,
                    fmt_tick(t, y2.step)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (top + bottom) / 2.0,
            escape(&self.y_label)
        );
        if let (true, Some(l)) = (has_y2, &self.y2_label) {
            let _ = writeln!(
                out,
                r#"<text transform="translate({:.2} {:.2}) rotate(90)" text-anchor="middle">{}</text>"#,
                WIDTH - 18.0,
                (top + bottom) / 2.0,
                escape(l)
            );
        }

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let ya = if s.secondary { &y2 } else { &y };
            match s.kind {
                SeriesKind::Points => {
                    for &(px, py) in s.points.iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#,
                            map_x(&x, px),
                            map_y(ya, py)
                        );
                    }
                }
                SeriesKind::Line | SeriesKind::Step => {
                    let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                        path_data(s, &x, ya)
                    );
                }
            }
            let ly = bottom - 12.0 - 15.0 * (self.series.len() - 1 - i) as f64;
            let lx = right - 190.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&s.label),
                if s.secondary { " (right axis)" } else { "" }
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_axes() {
        let a = Axis::covering(3.0, 97.0);
        assert_eq!((a.min, a.max, a.step), (0.0, 100.0, 20.0));
        let a = Axis::covering(0.0, 0.63);
        assert_eq!(a.step, 0.2);
        assert!((a.max - 0.8).abs() < 1e-12);
        assert!(Axis::covering(5.0, 5.0).ticks().len() > 1);
    }

    #[test]
    fn mapping_hits_corners() {
        let a = Axis { min: 0.0, max: 10.0, step: 2.0 };
        assert_eq!(map_x(&a, 0.0), MARGIN_LEFT);
        assert_eq!(map_x(&a, 10.0), WIDTH - MARGIN_RIGHT);
        assert_eq!(map_y(&a, 0.0), HEIGHT - MARGIN_BOTTOM);
        assert_eq!(map_y(&a, 10.0), MARGIN_TOP);
    }

    #[test]
    fn golden_path_data() {
        let a = Axis { min: 0.0, max: 10.0, step: 2.0 };
        let line = Series::new("l", SeriesKind::Line, vec![(0.0, 0.0), (5.0, 10.0)]);
        assert_eq!(path_data(&line, &a, &a), "M70.00 380.00 L360.00 40.00");
        let step = Series::new("s", SeriesKind::Step, vec![(0.0, 0.0), (5.0, 10.0)]);
        assert_eq!(path_data(&step, &a, &a), "M70.00 380.00 L360.00 380.00 L360.00 40.00");
    }

    #[test]
    fn render_is_deterministic_and_escaped() {
        let chart = Chart {
            title: "a < b".into(),
            series: vec![Series::new("s", SeriesKind::Points, vec![(1.0, 2.0), (f64::NAN, 1.0)])],
            ..Default::default()
        };
        let svg = chart.render();
        assert_eq!(svg, chart.render());
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }
}
