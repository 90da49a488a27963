//! Minimal SVG charts. Each file carries its plotted numbers in a leading
//! comment so the figures can be regenerated or checked without rerunning.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn header(out: &mut String, title: &str, data: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, "<!-- data\n{}-->", data.replace("--", "- -"));
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Piecewise-linear viridis approximation for `t` in `[0, 1]`.
fn viridis(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 1.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + f * (q - p)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Mean absolute error per grid cell, row `j` at `y = margin + j spacing`.
pub fn heatmap(title: &str, cells: &[Vec<f64>], spacing: f64, margin: f64) -> String {
    let ny = cells.len();
    let nx = cells.first().map_or(0, Vec::len);
    let mut data = String::from("y_index,x_index,x_m,y_m,mean_abs_error_m\n");
    for (j, row) in cells.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let _ = writeln!(data, "{j},{i},{:.4},{:.4},{v:.6e}", margin + i as f64 * spacing, margin + j as f64 * spacing);
        }
    }
    let vmax = cells.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0_f64, f64::max);
    let mut out = String::new();
    header(&mut out, title, &data);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let cw = pw / nx.max(1) as f64;
    let ch = ph / ny.max(1) as f64;
    for (j, row) in cells.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let t = if vmax > 0.0 { v / vmax } else { 0.0 };
            let x = LEFT + i as f64 * cw;
            // Larger y at the top.
            let y = TOP + (ny - 1 - j) as f64 * ch;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{v:.4} m</title></rect>"#,
                cw + 0.3,
                ch + 0.3,
                viridis(t)
            );
        }
    }
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#);
    let x_end = margin + (nx.max(1) - 1) as f64 * spacing;
    let y_end = margin + (ny.max(1) - 1) as f64 * spacing;
    let _ = writeln!(out, r#"<text x="{LEFT}" y="{:.1}">x = {margin:.2} m</text>"#, H - BOTTOM + 18.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">x = {x_end:.2} m</text>"#, LEFT + pw, H - BOTTOM + 18.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">y = {y_end:.2}</text>"#, LEFT - 6.0, TOP + 12.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">y = {margin:.2}</text>"#, LEFT - 6.0, TOP + ph);
    // Colour bar.
    let bx = W - RIGHT + 30.0;
    let steps = 20;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{bx}" y="{:.2}" width="18" height="{:.2}" fill="{}"/>"#,
            TOP + k as f64 * ph / steps as f64,
            ph / steps as f64 + 0.3,
            viridis(t)
        );
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{vmax:.3} m</text>"#, bx + 24.0, TOP + 10.0);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">0 m</text>"#, bx + 24.0, TOP + ph);
    out.push_str("</svg>\n");
    out
}

/// Empirical CDFs of absolute error on a log10 x axis; zeros are drawn at the axis floor.
pub fn cdf(title: &str, series: &[Series]) -> String {
    let mut data = String::from("series,abs_error_m,probability\n");
    for s in series {
        for (x, y) in &s.points {
            let _ = writeln!(data, "{},{x:.6e},{y:.6}", s.label);
        }
    }
    let positive = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(|x| *x > 0.0 && x.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let (lo, hi) = if hi > 0.0 {
        ((lo.max(1e-6)).log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0))
    } else {
        (-4.0, 1.0)
    };
    let mut out = String::new();
    header(&mut out, title, &data);
    let frame = Frame { x0: lo, x1: hi, y0: 0.0, y1: 1.0 };
    frame.axes(&mut out, "|error| (m, log scale)", "P(|error| <= x)", true);
    for (i, s) in series.iter().enumerate() {
        let mut d = String::new();
        let mut prev_y = 0.0;
        for (k, (x, y)) in s.points.iter().enumerate() {
            let lx = if *x > 0.0 { x.log10().max(lo) } else { lo };
            let (px, py) = (frame.px(lx), frame.py(*y));
            if k == 0 {
                let _ = write!(d, "M{px:.2},{:.2} ", frame.py(0.0));
            }
            // Step shape: horizontal then vertical.
            let _ = write!(d, "L{px:.2},{:.2} L{px:.2},{py:.2} ", frame.py(prev_y));
            prev_y = *y;
        }
        let _ = write!(d, "L{:.2},{:.2}", frame.px(hi), frame.py(prev_y));
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, d.trim(), colour(i));
        legend(&mut out, i, &s.label);
    }
    out.push_str("</svg>\n");
    out
}

/// Polyline chart with markers, linear axes.
pub fn lines(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut data = format!("series,{x_label},{y_label}\n");
    for s in series {
        for (x, y) in &s.points {
            let _ = writeln!(data, "{},{x:.6},{y:.6e}", s.label);
        }
    }
    let all: Vec<(f64, f64)> =
        series.iter().flat_map(|s| s.points.iter().copied()).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let x0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y1 = all.iter().map(|p| p.1).fold(0.0_f64, f64::max);
    let (x0, x1) = if x0 < x1 { (x0, x1) } else { (0.0, 1.0) };
    let y1 = if y1 > 0.0 { y1 * 1.05 } else { 1.0 };
    let mut out = String::new();
    header(&mut out, title, &data);
    let frame = Frame { x0, x1, y0: 0.0, y1 };
    frame.axes(&mut out, x_label, y_label, false);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", frame.px(*x), frame.py(*y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, pts.join(" "), colour(i));
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{}"/>"#, colour(i));
        }
        legend(&mut out, i, &s.label);
    }
    out.push_str("</svg>\n");
    out
}

fn legend(out: &mut String, i: usize, label: &str) {
    let y = TOP + 10.0 + 18.0 * i as f64;
    let x = W - RIGHT + 12.0;
    let _ = writeln!(out, r#"<line x1="{x}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#, x + 18.0, colour(i));
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 22.0, y + 4.0, escape(label));
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str, log_x: bool) {
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, r - l, b - t);
        for k in 0..=4 {
            let x = self.x0 + (self.x1 - self.x0) * k as f64 / 4.0;
            let label = if log_x { format!("1e{}", x.round() as i64) } else { format!("{x:.3}") };
            let label = if log_x && (x - x.round()).abs() > 1e-9 { format!("{:.1e}", 10f64.powf(x)) } else { label };
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.1}" text-anchor="middle">{label}</text>"#, self.px(x), b + 16.0);
            let y = self.y0 + (self.y1 - self.y0) * k as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{y:.3}</text>"#, l - 6.0, self.py(y) + 4.0);
            let _ = writeln!(out, r##"<line x1="{l}" y1="{:.2}" x2="{r}" y2="{:.2}" stroke="#dddddd"/>"##, self.py(y), self.py(y));
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, escape(x_label));
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(y_label)
        );
    }
}
