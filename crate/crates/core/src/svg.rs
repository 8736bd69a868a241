//! Minimal standalone SVG charts. Output needs no external assets.

use std::fmt::Write;

use crate::grid::PitchGrid;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|k| k * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

/// Axes frame with ticks; returns the data-to-pixel mapping.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    fn draw(&self, out: &mut String, x_label: &str, y_label: &str) {
        let _ = write!(
            out,
            r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for t in ticks(self.x0, self.x1, 6) {
            let x = self.px(t);
            let _ = write!(
                out,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                H - BOTTOM,
                H - BOTTOM + 5.0,
                H - BOTTOM + 18.0,
                fmt_tick(t)
            );
        }
        for t in ticks(self.y0, self.y1, 6) {
            let y = self.py(t);
            let _ = write!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0, esc(x_label));
        let _ = write!(
            out,
            r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">{1}</text>"#,
            (TOP + H - BOTTOM) / 2.0,
            esc(y_label)
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn new(title: impl Into<String>) -> Self {
        LineChart { title: title.into(), x_label: String::new(), y_label: String::new(), series: Vec::new() }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        header(&mut out, W, H, &self.title);
        let frame = Frame::new(self.series.iter().flat_map(|s| s.points.iter().copied()));
        frame.draw(&mut out, &self.x_label, &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                pts.join(" ")
            );
            let ly = TOP + 14.0 + 16.0 * i as f64;
            let _ = write!(
                out,
                r#"<line x1="{0:.1}" y1="{ly:.1}" x2="{1:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{2:.1}" y="{3:.1}">{4}</text>"#,
                W - RIGHT - 150.0,
                W - RIGHT - 125.0,
                W - RIGHT - 120.0,
                ly + 4.0,
                esc(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Points with an optional reference line `y = a + b·x`.
pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], line: Option<(f64, f64)>) -> String {
    let mut out = String::new();
    header(&mut out, W, H, title);
    let frame = Frame::new(points.iter().copied());
    frame.draw(&mut out, x_label, y_label);
    for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let _ = write!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f77b4" fill-opacity="0.5"/>"##,
            frame.px(x),
            frame.py(y)
        );
    }
    if let Some((a, b)) = line {
        let _ = write!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="1.5"/>"##,
            frame.px(frame.x0),
            frame.py(a + b * frame.x0),
            frame.px(frame.x1),
            frame.py(a + b * frame.x1)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn heat_color(t: f64) -> String {
    // white → dark red
    let t = t.clamp(0.0, 1.0);
    let r = 255.0 - 120.0 * t;
    let g = 255.0 * (1.0 - t).powf(0.8);
    let b = 255.0 * (1.0 - t).powf(0.6);
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Per-state values drawn on the pitch, attacking to the right.
pub fn heatmap(title: &str, grid: PitchGrid, values: &[f64]) -> String {
    let (w, h) = (W, 40.0 + (W - 40.0) * 68.0 / 105.0 + 20.0);
    let (pw, ph) = (W - 40.0, (W - 40.0) * 68.0 / 105.0);
    let mut out = String::new();
    header(&mut out, w, h, title);
    let vmax = values.iter().cloned().fold(0.0, f64::max);
    let (cw, ch) = (pw / grid.m_x() as f64, ph / grid.m_y() as f64);
    for s in grid.states() {
        let (cx, cy) = grid.cell(s);
        let v = values.get(s.0).copied().unwrap_or(0.0);
        let t = if vmax > 0.0 { v / vmax } else { 0.0 };
        // y = 0 at the bottom of the drawing
        let y = 40.0 + ph - (cy + 1) as f64 * ch;
        let _ = write!(
            out,
            r#"<rect x="{:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}"><title>state {} : {v:.5}</title></rect>"#,
            20.0 + cx as f64 * cw,
            heat_color(t),
            s.0
        );
    }
    let _ = write!(out, r##"<rect x="20" y="40" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##);
    let _ = write!(
        out,
        r##"<line x1="{0:.2}" y1="40" x2="{0:.2}" y2="{1:.2}" stroke="#333"/>"##,
        20.0 + pw / 2.0,
        40.0 + ph
    );
    let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">max {vmax:.4}</text>"#, w - 20.0, h - 4.0);
    out.push_str("</svg>\n");
    out
}

/// One row per group, points jittered vertically by a deterministic
/// sequence; colors by group.
pub fn strip_plot(title: &str, x_label: &str, groups: &[(String, Vec<(String, f64)>)]) -> String {
    let rows = groups.len().max(1) as f64;
    let h = TOP + BOTTOM + 60.0 * rows;
    let mut out = String::new();
    header(&mut out, W, h, title);
    let frame = Frame::new(groups.iter().flat_map(|g| g.1.iter().map(|p| (p.1, 0.0))));
    let px = |x: f64| LEFT + (x - frame.x0) / (frame.x1 - frame.x0) * (W - LEFT - RIGHT);
    let _ = write!(out, r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#333"/>"##, h - BOTTOM, W - RIGHT);
    for t in ticks(frame.x0, frame.x1, 6) {
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(t),
            h - BOTTOM + 18.0,
            fmt_tick(t)
        );
    }
    let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, h - 12.0, esc(x_label));
    for (gi, (name, pts)) in groups.iter().enumerate() {
        let yc = TOP + 30.0 + 60.0 * gi as f64;
        let color = PALETTE[gi % PALETTE.len()];
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 8.0, yc + 4.0, esc(name));
        for (k, (label, v)) in pts.iter().enumerate() {
            // golden-ratio jitter in [-20, 20]
            let j = ((k as f64 * 0.618_033_988_75).fract() - 0.5) * 40.0;
            let _ = write!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" fill-opacity="0.7"><title>{}: {v:.4}</title></circle>"#,
                px(*v),
                yc + j,
                esc(label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
