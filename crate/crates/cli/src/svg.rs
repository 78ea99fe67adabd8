// Copyright 2026 The pulseqml Authors
// SPDX-License-Identifier: Apache-2.0

//! Minimal line plots: polylines, axes with end labels, optional log scaling.

use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Placement inside the canvas: x, y, width, height in pixels.
    pub frame: (f64, f64, f64, f64),
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str, frame: (f64, f64, f64, f64)) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
            frame,
        }
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            label: label.into(),
            points,
        });
        self
    }
}

fn transform(v: f64, log: bool) -> Option<f64> {
    let t = if log { (v > 0.0).then(|| v.log10())? } else { v };
    t.is_finite().then_some(t)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn render_panel(svg: &mut String, p: &Panel) {
    let (fx, fy, fw, fh) = p.frame;
    let (left, right, top, bottom) = (fx + 60.0, fx + fw - 15.0, fy + 25.0, fy + fh - 40.0);
    let pts: Vec<Vec<(f64, f64)>> = p
        .series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter_map(|&(x, y)| Some((transform(x, p.log_x)?, transform(y, p.log_y)?)))
                .collect()
        })
        .collect();
    let (x0, x1) = range(pts.iter().flatten().map(|q| q.0));
    let (y0, y1) = range(pts.iter().flatten().map(|q| q.1));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let _ = writeln!(svg, r##"<rect x="{fx:.1}" y="{fy:.1}" width="{fw:.1}" height="{fh:.1}" fill="white" stroke="#cccccc"/>"##);
    let _ = writeln!(
        svg,
        r#"<polyline points="{left:.1},{top:.1} {left:.1},{bottom:.1} {right:.1},{bottom:.1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#, (left + right) / 2.0, fy + 16.0, p.title);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, (left + right) / 2.0, bottom + 32.0, p.x_label);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        fx + 12.0,
        (top + bottom) / 2.0,
        fx + 12.0,
        (top + bottom) / 2.0,
        p.y_label
    );
    for (v, anchor, x) in [(x0, "start", left), (x1, "end", right)] {
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="{anchor}">{}</text>"#, bottom + 14.0, tick(v, p.log_x));
    }
    for (v, y) in [(y0, bottom), (y1, top + 8.0)] {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{y:.1}" font-size="10" text-anchor="end">{}</text>"#, left - 4.0, tick(v, p.log_y));
    }
    for (i, (s, line)) in p.series.iter().zip(&pts).enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, coords.join(" "));
        let ly = top + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}" font-size="10" text-anchor="end" fill="{colour}">{}</text>"#, right - 4.0, s.label);
    }
}

pub fn render(width: f64, height: f64, panels: &[Panel]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    for p in panels {
        render_panel(&mut svg, p);
    }
    svg.push_str("</svg>\n");
    svg
}
