//! Minimal static SVG: line plots with error bars and heat-map panels.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Ticks at 1, 2 or 5 times a power of ten, about five per axis.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    label_with(v, 4)
}

fn label_with(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) }
}

pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub err: &'a [f64],
}

pub fn line_plot(s: &Series, title: &str, xlabel: &str, ylabel: &str) -> String {
    let (x0, x1) = range(s.x.iter().cloned());
    let (y0, y1) = range(s.y.iter().zip(s.err).flat_map(|(y, e)| [y - e, y + e]).chain([0.0]));
    let y1 = y1 + 0.05 * (y1 - y0);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut o = String::new();
    let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(o, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(o, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(t));
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(o, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, label(t));
    }
    let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        o,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );
    for ((x, y), e) in s.x.iter().zip(s.y).zip(s.err) {
        if *e > 0.0 {
            let _ = writeln!(o, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#888"/>"##, px(*x), py(y - e), py(y + e));
        }
    }
    let pts: Vec<String> = s.x.iter().zip(s.y).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
    let _ = writeln!(o, r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>"##, pts.join(" "));
    o.push_str("</svg>\n");
    o
}

pub struct Panel {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    /// Cell centers along the horizontal axis.
    pub u: Vec<f64>,
    /// Cell centers along the vertical axis.
    pub v: Vec<f64>,
    /// `values[iv * u.len() + iu]`, in [0, 1].
    pub values: Vec<f64>,
}

/// Dark blue through teal to yellow.
fn color(t: f64) -> String {
    let stops = [(0.0, [68.0, 1.0, 84.0]), (0.5, [33.0, 145.0, 140.0]), (1.0, [253.0, 231.0, 37.0])];
    let t = t.clamp(0.0, 1.0);
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let f = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + f * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn heatmaps(panels: &[Panel], title: &str) -> String {
    let size = 240.0;
    let pad = 70.0;
    let width = pad + panels.len() as f64 * (size + pad);
    let height = size + 120.0;
    let mut o = String::new();
    let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(o, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    for (k, p) in panels.iter().enumerate() {
        let left = pad + k as f64 * (size + pad);
        let top = 50.0;
        let (nu, nv) = (p.u.len(), p.v.len());
        let cw = size / nu as f64;
        let ch = size / nv as f64;
        for iv in 0..nv {
            for iu in 0..nu {
                let y = top + size - (iv + 1) as f64 * ch;
                let _ = writeln!(
                    o,
                    r#"<rect x="{:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{}" shape-rendering="crispEdges"/>"#,
                    left + iu as f64 * cw,
                    cw + 0.05,
                    ch + 0.05,
                    color(p.values[iv * nu + iu])
                );
            }
        }
        let _ = writeln!(o, r#"<rect x="{left}" y="{top}" width="{size}" height="{size}" fill="none" stroke="black"/>"#);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, left + size / 2.0, top - 8.0, escape(&p.title));
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, left + size / 2.0, top + size + 36.0, escape(&p.xlabel));
        let cy = top + size / 2.0;
        let _ = writeln!(o, r#"<text x="{0:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {0:.2} {cy:.2})">{1}</text>"#, left - 40.0, escape(&p.ylabel));
        let (u0, u1) = (p.u[0], p.u[nu - 1]);
        let (v0, v1) = (p.v[0], p.v[nv - 1]);
        for (t, x) in [(u0, left), (u1, left + size)] {
            let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + size + 16.0, label_with(t, 2));
        }
        for (t, y) in [(v0, top + size), (v1, top)] {
            let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, label_with(t, 2));
        }
    }
    o.push_str("</svg>\n");
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(-1.58, 1.58);
        assert_eq!(t, vec![-1.0, 0.0, 1.0]);
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!(ticks(0.0, 0.0).len() == 1);
    }

    #[test]
    fn colors_span_the_palette() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(2.0), color(1.0));
    }
}
