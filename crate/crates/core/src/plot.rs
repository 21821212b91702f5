//! Deterministic SVG rendering of step curves and bands.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Band of one uncertainty mode at one confidence level: `(t, lo, hi)` at
/// each event time, holding until the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotBand {
    pub label: String,
    pub hatched: bool,
    pub opacity: f64,
    pub steps: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotCurve {
    pub label: String,
    pub color: String,
    /// `(t, S)` at each event time.
    pub nominal: Vec<(f64, f64)>,
    pub censor_times: Vec<f64>,
    pub bands: Vec<PlotBand>,
}

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

struct Frame {
    t_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * t / self.t_max
    }

    fn y(&self, s: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - s.clamp(0.0, 1.0))
    }
}

/// Right-continuous step values starting at `(0, start)`.
fn step_path(points: &[(f64, f64)], start: f64, t_end: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, start)];
    let mut last = start;
    for &(t, s) in points {
        out.push((t, last));
        out.push((t, s));
        last = s;
    }
    out.push((t_end, last));
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(max: f64) -> Vec<f64> {
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    (0..)
        .map(|i| i as f64 * step)
        .take_while(|&t| t <= max + 1e-9)
        .collect()
}

/// Renders the curves; identical input gives byte-identical output.
pub fn render_svg(curves: &[PlotCurve], title: &str) -> String {
    let t_last = curves
        .iter()
        .flat_map(|c| c.nominal.iter().map(|p| p.0).chain(c.censor_times.iter().copied()))
        .fold(0.0, f64::max);
    let t_end = if t_last > 0.0 { t_last * 1.05 } else { 1.0 };
    let frame = Frame { t_max: t_end };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    svg.push_str("<defs>\n");
    for (i, curve) in curves.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<pattern id="hatch{i}" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" stroke="{}" stroke-width="1.5"/></pattern>"#,
            curve.color
        );
    }
    svg.push_str("</defs>\n");
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        fmt((LEFT + WIDTH - RIGHT) / 2.0),
        escape(title)
    );

    // Axes and ticks.
    let (x0, x1, y0, y1) = (frame.x(0.0), frame.x(t_end), frame.y(0.0), frame.y(1.0));
    let _ = writeln!(
        svg,
        r#"<path d="M{} {} L{} {} L{} {}" fill="none" stroke="black"/>"#,
        fmt(x0),
        fmt(y1),
        fmt(x0),
        fmt(y0),
        fmt(x1),
        fmt(y0)
    );
    for tick in nice_ticks(t_end) {
        let x = frame.x(tick);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"#,
            fmt(x),
            fmt(y0),
            fmt(y0 + 5.0),
            fmt(y0 + 18.0),
            tick
        );
    }
    for i in 0..=5 {
        let s = i as f64 / 5.0;
        let y = frame.y(s);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end">{5:.1}</text>"#,
            fmt(x0 - 5.0),
            fmt(y),
            fmt(x0),
            fmt(x0 - 8.0),
            fmt(y + 4.0),
            s
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">Time</text>"#,
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 10.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">Survival probability</text>"#,
        fmt((y0 + y1) / 2.0)
    );

    // Bands first so that the curves sit on top.
    for (i, curve) in curves.iter().enumerate() {
        for band in &curve.bands {
            let lo: Vec<(f64, f64)> = band.steps.iter().map(|&(t, lo, _)| (t, lo)).collect();
            let hi: Vec<(f64, f64)> = band.steps.iter().map(|&(t, _, hi)| (t, hi)).collect();
            let upper = step_path(&hi, 1.0, t_end);
            let lower = step_path(&lo, 1.0, t_end);
            let mut d = String::new();
            for (k, &(t, s)) in upper.iter().chain(lower.iter().rev()).enumerate() {
                let _ = write!(d, "{}{} {} ", if k == 0 { "M" } else { "L" }, fmt(frame.x(t)), fmt(frame.y(s)));
            }
            d.push('Z');
            let fill = if band.hatched {
                format!("url(#hatch{i})")
            } else {
                curve.color.clone()
            };
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="{fill}" fill-opacity="{}" stroke="none"><title>{}</title></path>"#,
                band.opacity,
                escape(&band.label)
            );
        }
    }
    for curve in curves {
        let path = step_path(&curve.nominal, 1.0, t_end);
        let points: Vec<String> = path
            .iter()
            .map(|&(t, s)| format!("{},{}", fmt(frame.x(t)), fmt(frame.y(s))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points.join(" "),
            curve.color
        );
        for &t in &curve.censor_times {
            let s = curve
                .nominal
                .iter()
                .take_while(|p| p.0 <= t)
                .last()
                .map_or(1.0, |p| p.1);
            let (x, y) = (frame.x(t), frame.y(s));
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="{3}" stroke-width="1.5"/>"#,
                fmt(x),
                fmt(y - 5.0),
                fmt(y + 5.0),
                curve.color
            );
        }
    }

    // Legend.
    let mut y = TOP + 10.0;
    let lx = WIDTH - RIGHT + 15.0;
    for (i, curve) in curves.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{3}" stroke-width="2"/><text x="{4}" y="{5}">{6}</text>"#,
            fmt(lx),
            fmt(y),
            fmt(lx + 20.0),
            curve.color,
            fmt(lx + 25.0),
            fmt(y + 4.0),
            escape(&curve.label)
        );
        y += 18.0;
        for band in &curve.bands {
            let fill = if band.hatched {
                format!("url(#hatch{i})")
            } else {
                curve.color.clone()
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="20" height="10" fill="{fill}" fill-opacity="{}"/><text x="{}" y="{}">{}</text>"#,
                fmt(lx),
                fmt(y - 5.0),
                band.opacity,
                fmt(lx + 25.0),
                fmt(y + 4.0),
                escape(&band.label)
            );
            y += 16.0;
        }
        y += 6.0;
    }
    svg.push_str("</svg>\n");
    svg
}
