//! Small static SVG figures: attribution waterfalls, line charts with error
//! bars, and histograms.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

pub const TOWARD_SIB: &str = "#d62728";
pub const TOWARD_NOSIB: &str = "#1f77b4";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str, height: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    s
}

fn axis_label(s: &mut String, x: f64, y: f64, text: &str, rotate: bool) {
    let transform = if rotate { format!(r#" transform="rotate(-90 {x} {y})""#) } else { String::new() };
    let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="middle"{transform}>{}</text>"#, escape(text));
}

/// One bar of a waterfall.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub label: String,
    pub value: f64,
}

/// Horizontal waterfall from `base` through every step to `base + Σvalue`.
/// Positive steps are red, negative blue.
pub fn waterfall(title: &str, base: f64, steps: &[Step]) -> String {
    let row = 22.0;
    let height = TOP + BOTTOM + row * (steps.len() as f64 + 1.0);
    let mut s = open(title, height);
    let mut lo = base.min(0.0);
    let mut hi = base.max(1.0);
    let mut acc = base;
    for st in steps {
        acc += st.value;
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    let plot_left = 220.0;
    let x = |v: f64| plot_left + (v - lo) / (hi - lo).max(1e-12) * (W - plot_left - RIGHT);
    let _ = writeln!(s, r##"<line x1="{0:.1}" y1="{1}" x2="{0:.1}" y2="{2}" stroke="#888" stroke-dasharray="3,3"/>"##, x(base), TOP, height - BOTTOM);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">base {base:.3}</text>"#, x(base), height - BOTTOM + 16.0);
    let mut acc = base;
    for (i, st) in steps.iter().enumerate() {
        let y = TOP + row * i as f64;
        let (a, b) = (acc, acc + st.value);
        let color = if st.value >= 0.0 { TOWARD_SIB } else { TOWARD_NOSIB };
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="{color}"/>"#,
            x(a.min(b)),
            y + 3.0,
            (x(a.max(b)) - x(a.min(b))).max(0.5),
            row - 6.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, plot_left - 6.0, y + row / 2.0 + 4.0, escape(&st.label));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{:+.3}</text>"#, x(a.max(b)) + 4.0, y + row / 2.0 + 4.0, st.value);
        acc = b;
    }
    let y = TOP + row * steps.len() as f64;
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">f(x) = {acc:.3}</text>"#, plot_left - 6.0, y + row / 2.0 + 4.0);
    s.push_str("</svg>\n");
    s
}

/// A point with a symmetric error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub err: f64,
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[Point]) -> String {
    let mut s = open(title, H);
    let (x0, x1) = points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (x0, x1) = if x0 < x1 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
    let (y0, y1) = (0.0, 1.0);
    let px = |v: f64| LEFT + (v - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |v: f64| H - BOTTOM - (v - y0) / (y1 - y0) * (H - TOP - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - BOTTOM, W - RIGHT);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, LEFT - 6.0, py(v) + 4.0);
    }
    for p in points {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(p.x), H - BOTTOM + 16.0, p.x);
    }
    let path: Vec<String> = points.iter().map(|p| format!("{:.1},{:.1}", px(p.x), py(p.y))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{TOWARD_NOSIB}" stroke-width="2"/>"#, path.join(" "));
    for p in points {
        let _ = writeln!(s, r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{TOWARD_NOSIB}"/>"#, px(p.x), py(p.y - p.err), py(p.y + p.err));
        let _ = writeln!(s, r#"<circle class="point" cx="{:.1}" cy="{:.1}" r="3.5" fill="{TOWARD_NOSIB}"/>"#, px(p.x), py(p.y));
    }
    axis_label(&mut s, (LEFT + W - RIGHT) / 2.0, H - 12.0, x_label, false);
    axis_label(&mut s, 16.0, (TOP + H - BOTTOM) / 2.0, y_label, true);
    s.push_str("</svg>\n");
    s
}

/// Vertical bars; `edges` has one more entry than `counts`.
pub fn histogram(title: &str, x_label: &str, edges: &[f64], counts: &[u64]) -> String {
    let mut s = open(title, H);
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let n = counts.len().max(1) as f64;
    let bw = (W - LEFT - RIGHT) / n;
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - BOTTOM, W - RIGHT);
    for (i, &c) in counts.iter().enumerate() {
        let h = c as f64 / max * (H - TOP - BOTTOM);
        let x = LEFT + bw * i as f64;
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{TOWARD_NOSIB}" stroke="white"/>"#,
            x,
            H - BOTTOM - h,
            bw
        );
        if c > 0 {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{c}</text>"#, x + bw / 2.0, H - BOTTOM - h - 4.0);
        }
    }
    let step = (counts.len() / 10).max(1);
    for (i, e) in edges.iter().enumerate().step_by(step) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{e}</text>"#, LEFT + bw * i as f64, H - BOTTOM + 16.0);
    }
    axis_label(&mut s, (LEFT + W - RIGHT) / 2.0, H - 12.0, x_label, false);
    axis_label(&mut s, 16.0, (TOP + H - BOTTOM) / 2.0, "users", true);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waterfall_colors_bars_by_sign() {
        let steps: Vec<Step> = (0..10).map(|i| Step { label: format!("P{i}"), value: if i % 3 == 0 { -0.02 } else { 0.05 } }).collect();
        let svg = waterfall("u<1>", 0.3, &steps);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 10);
        assert_eq!(svg.matches(TOWARD_NOSIB).count(), 4);
        assert_eq!(svg.matches(TOWARD_SIB).count(), 6);
        assert!(svg.contains("u&lt;1&gt;"));
        let empty = waterfall("none", 0.4, &[]);
        assert!(!empty.contains(r#"class="bar""#) && empty.contains("base 0.400"));
    }

    #[test]
    fn charts_draw_every_item() {
        let pts = [Point { x: 1.0, y: 0.6, err: 0.05 }, Point { x: 15.0, y: 0.7, err: 0.02 }];
        assert_eq!(line_chart("sweep", "N", "BA", &pts).matches(r#"class="point""#).count(), 2);
        let h = histogram("h", "days", &[0.0, 10.0, 20.0], &[3, 0]);
        assert_eq!(h.matches(r#"class="bar""#).count(), 2);
    }
}
