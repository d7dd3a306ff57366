//! Minimal SVG charts: the sweep scatter and the two-sample strip plot.

use std::fmt::Write as _;

use oamncc_core::montecarlo::{SweepPoint, SweepPolicy};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1, y0, y1) = (f.px(f.x.0), f.px(f.x.1), f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let py = f.py(yv);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, tick(yv));
        if x_ticks {
            let xv = f.x.0 + t * (f.x.1 - f.x.0);
            let px = f.px(xv);
            let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 4.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv));
        }
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{v:.3e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn marker(s: &mut String, x: f64, y: f64, color: &str, cross: bool) {
    if cross {
        let r = 5.0;
        let _ = writeln!(
            s,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{color}" stroke-width="2"/>"#,
            x - r,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r,
            x + r,
            y - r
        );
    } else {
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}" fill-opacity="0.8"/>"#);
    }
}

fn legend(s: &mut String, row: usize, label: &str, color: &str, cross: bool) {
    let x = WIDTH - MARGIN_R + 20.0;
    let y = MARGIN_T + 20.0 + row as f64 * 18.0;
    marker(s, x, y, color, cross);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 12.0, y + 4.0, escape(label));
}

/// RTB successes against rescues, one colour per margin; duty-wrapped
/// points are drawn as crosses.
pub fn sweep_scatter(points: &[SweepPoint]) -> String {
    let xs = points.iter().map(|p| p.rescues as f64);
    let ys = points.iter().map(|p| p.rtb_successes as f64);
    let f = Frame::new(
        (0.0, xs.fold(0.0, f64::max)),
        (ys.clone().fold(f64::INFINITY, f64::min).min(0.0), ys.fold(0.0, f64::max)),
    );
    let mut margins: Vec<f64> = points.iter().map(|p| p.margin).collect();
    margins.sort_by(f64::total_cmp);
    margins.dedup();
    let color = |m: f64| PALETTE[margins.iter().position(|x| *x == m).unwrap_or(0) % PALETTE.len()];

    let mut s = open("Overboard sweep: RTB successes vs rescues");
    axes(&mut s, &f, "successful rescues", "successful RTBs", true);
    for p in points {
        let cross = p.policy == SweepPolicy::DutyOnceSpotted;
        marker(&mut s, f.px(p.rescues as f64), f.py(p.rtb_successes as f64), color(p.margin), cross);
    }
    for (row, m) in margins.iter().enumerate() {
        legend(&mut s, row, &format!("margin {m}"), color(*m), false);
    }
    legend(&mut s, margins.len(), "duty-once-spotted", "black", true);
    s.push_str("</svg>\n");
    s
}

/// Overlaid strip plot of two samples with their mean lines.
pub fn strip_plot(title: &str, metric: &str, a: (&str, &[f64]), b: (&str, &[f64])) -> String {
    let all = a.1.iter().chain(b.1.iter()).copied();
    let lo = all.clone().fold(f64::INFINITY, f64::min);
    let hi = all.fold(f64::NEG_INFINITY, f64::max);
    let f = Frame::new((0.0, 2.0), (lo.min(0.0), hi.max(0.0)));
    let mut s = open(title);
    axes(&mut s, &f, "", metric, false);
    for (col, (label, samples)) in [a, b].into_iter().enumerate() {
        let centre = col as f64 + 0.5;
        let color = PALETTE[col];
        for (k, v) in samples.iter().enumerate() {
            // Deterministic jitter so repeated runs emit identical files.
            let jitter = ((k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 40) as f64 / (1u64 << 24) as f64 - 0.5;
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}" fill-opacity="0.35"/>"#,
                f.px(centre + 0.6 * jitter),
                f.py(*v)
            );
        }
        if !samples.is_empty() {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let y = f.py(mean);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#,
                f.px(centre - 0.4),
                f.px(centre + 0.4)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(centre),
            HEIGHT - MARGIN_B + 18.0,
            escape(label)
        );
        legend(&mut s, col, label, color, false);
    }
    s.push_str("</svg>\n");
    s
}
