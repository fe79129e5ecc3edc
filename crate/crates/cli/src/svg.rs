//! Minimal self-contained SVG line charts and BKR region diagrams.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(x, low, high)` band drawn behind the line.
    pub band: Vec<(f64, f64, f64)>,
    pub markers: bool,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            points,
            band: Vec::new(),
            markers: false,
        }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64, f64)>) -> Self {
        self.band = band;
        self
    }

    pub fn with_markers(mut self) -> Self {
        self.markers = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= n as f64).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_x: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let (a, b, v) = if self.log_x {
            (self.x.0.log10(), self.x.1.log10(), x.log10())
        } else {
            (self.x.0, self.x.1, x)
        };
        MARGIN.0 + (v - a) / (b - a) * (WIDTH - MARGIN.0 - MARGIN.1)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN.3 - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN.2 - MARGIN.3)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let d = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - d, hi + d);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn render(&self) -> String {
        let usable = |x: f64| x.is_finite() && (!self.log_x || x > 0.0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if usable(x) && y.is_finite() {
                    xs.push(x);
                    ys.push(y);
                }
            }
            for &(x, lo, hi) in &s.band {
                if usable(x) && lo.is_finite() && hi.is_finite() {
                    xs.push(x);
                    ys.extend([lo, hi]);
                }
            }
        }
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (x0, x1) = if xs.is_empty() { (0.0, 1.0) } else { (min(&xs), max(&xs)) };
        let (y0, y1) = if ys.is_empty() { (0.0, 1.0) } else { padded(min(&ys), max(&ys)) };
        let (x0, x1) = if self.log_x {
            if x1 > x0 {
                (x0, x1)
            } else {
                (x0 / 2.0, x0 * 2.0)
            }
        } else if x1 > x0 {
            (x0, x1)
        } else {
            padded(x0, x1)
        };
        let f = Frame {
            x: (x0, x1),
            y: (y0, y1),
            log_x: self.log_x,
        };
        let mut out = header();
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        axes(&mut out, &f, &self.x_label, &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let band: Vec<_> = s.band.iter().filter(|b| usable(b.0) && b.1.is_finite() && b.2.is_finite()).collect();
            if !band.is_empty() {
                let mut d = String::new();
                for (k, b) in band.iter().enumerate() {
                    let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, f.px(b.0), f.py(b.2));
                }
                for b in band.iter().rev() {
                    let _ = write!(d, "L{:.2},{:.2} ", f.px(b.0), f.py(b.1));
                }
                let _ = writeln!(out, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d);
            }
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| usable(p.0) && p.1.is_finite())
                .map(|p| format!("{:.2},{:.2}", f.px(p.0), f.py(p.1)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="series" data-name="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                escape(&s.name),
                pts.join(" ")
            );
            if s.markers {
                for p in &pts {
                    let (x, y) = p.split_once(',').unwrap();
                    let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = MARGIN.2 + 14.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN.1 - 170.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}" font-size="12">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                lx + 25.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn header() -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN.0, WIDTH - MARGIN.1, MARGIN.2, HEIGHT - MARGIN.3);
    let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, r - l, b - t);
    let xt = if f.log_x {
        let (a, c) = (f.x.0.log10().ceil() as i32, f.x.1.log10().floor() as i32);
        let t: Vec<f64> = (a..=c).map(|k| 10f64.powi(k)).collect();
        if t.is_empty() {
            vec![f.x.0, f.x.1]
        } else {
            t
        }
    } else {
        nice_ticks(f.x.0, f.x.1, 6)
    };
    for x in xt {
        let px = f.px(x);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{:.1}" stroke="black"/><text x="{px:.2}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            b + 5.0,
            b + 18.0,
            label(x)
        );
    }
    for y in nice_ticks(f.y.0, f.y.1, 6) {
        let py = f.py(y);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            l - 5.0,
            l - 8.0,
            py + 4.0,
            label(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

/// Planar diagram of BKR paths: the excluded diamond `|x| + |y| < 2h`, the
/// switch regions `{|x| < h}` and `{|y| < h}`, and the given `(x, y)` paths.
pub fn region_diagram(title: &str, h: f64, paths: &[(&str, Vec<(f64, f64)>)]) -> String {
    let reach = paths
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.0.abs().max(q.1.abs())))
        .fold(2.0 * h, f64::max)
        * 1.1;
    let f = Frame {
        x: (-reach, reach),
        y: (-reach, reach),
        log_x: false,
    };
    let mut out = header();
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let strip = |out: &mut String, x0: f64, y0: f64, x1: f64, y1: f64, color: &str| {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.12"/>"#,
            f.px(x0),
            f.py(y1),
            f.px(x1) - f.px(x0),
            f.py(y0) - f.py(y1)
        );
    };
    strip(&mut out, -h, -reach, h, reach, "#1f77b4");
    strip(&mut out, -reach, -h, reach, h, "#d62728");
    let d = 2.0 * h;
    let _ = writeln!(
        out,
        r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#888888" fill-opacity="0.35" stroke="black"/>"##,
        f.px(d),
        f.py(0.0),
        f.px(0.0),
        f.py(d),
        f.px(-d),
        f.py(0.0),
        f.px(0.0),
        f.py(-d)
    );
    axes(&mut out, &f, "x", "y");
    for (i, (name, p)) in paths.iter().enumerate() {
        let color = PALETTE[(i + 2) % PALETTE.len()];
        let pts: Vec<String> = p.iter().map(|q| format!("{:.2},{:.2}", f.px(q.0), f.py(q.1))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-name="{}" points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
            escape(name),
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Keeps at most `max` evenly spaced points (always including the last one).
pub fn thin<T: Copy>(points: &[T], max: usize) -> Vec<T> {
    if points.len() <= max || max < 2 {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(max - 1);
    let mut out: Vec<T> = points.iter().step_by(stride).copied().collect();
    if (points.len() - 1) % stride != 0 {
        out.push(points[points.len() - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_polyline_per_series() {
        let c = Chart {
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "p".into(),
            log_x: false,
            series: vec![
                Series::line("one", vec![(0.0, 0.0), (1.0, 1.0)]),
                Series::line("two", vec![(0.0, 1.0), (1.0, 0.5)]).with_band(vec![(0.0, 0.9, 1.1), (1.0, 0.4, 0.6)]),
            ],
        };
        let s = c.render();
        assert!(s.starts_with("<?xml") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("class=\"series\"").count(), 2);
        assert!(s.contains("a &lt; b"));
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let v: Vec<usize> = (0..1000).collect();
        let t = thin(&v, 100);
        assert!(t.len() <= 101);
        assert_eq!(t[0], 0);
        assert_eq!(*t.last().unwrap(), 999);
    }
}
