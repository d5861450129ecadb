//! Minimal static SVG: heatmaps, line plots and histograms.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Blue (low) through white to red (high) on `[-1, 1]`.
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = 1.0 + t;
        (s, s, 1.0)
    } else {
        (1.0, 1.0 - t, 1.0 - t)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8)
}

fn header(w: f64, h: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `values[row][col]`, row 0 drawn at the bottom. Colours are scaled by
/// `scale` (values outside `[-scale, scale]` saturate).
pub fn heatmap(values: &[Vec<f64>], scale: f64, title: &str) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    let cell = if rows == 0 || cols == 0 { 1.0 } else { (W - 2.0 * PAD).min(H - 2.0 * PAD) / rows.max(cols) as f64 };
    let mut s = header(W, H, title);
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let x = PAD + j as f64 * cell;
            let y = PAD + (rows - 1 - i) as f64 * cell;
            let c = if scale > 0.0 { diverging(v / scale) } else { diverging(0.0) };
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{c}"/>"#, cell + 0.05, cell + 0.05);
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">scale +/-{scale:.4}</text>"#, PAD, H - 12.0);
    s.push_str("</svg>\n");
    s
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return Self { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let m = 0.05 * (y1 - y0);
        Self { x0, x1, y0: y0 - m, y1: y1 + m }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * PAD, H - 2.0 * PAD);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
        let _ = writeln!(s, r#"<text x="12" y="{}" font-family="sans-serif" font-size="11" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(ylabel));
        for (v, anchor, x, y) in [
            (self.x0, "start", PAD, H - PAD + 14.0),
            (self.x1, "end", W - PAD, H - PAD + 14.0),
        ] {
            let _ = writeln!(s, r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{v:.3}</text>"#);
        }
        for (v, y) in [(self.y0, H - PAD), (self.y1, PAD + 8.0)] {
            let _ = writeln!(s, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#, PAD - 4.0);
        }
    }
}

const COLOURS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Polylines with markers, one per named series.
pub fn line_plot(series: &[(&str, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str, title: &str) -> String {
    let frame = Frame::fit(series.iter().flat_map(|(_, p)| p.iter().copied()));
    let mut s = header(W, H, title);
    frame.axes(&mut s, xlabel, ylabel);
    for (k, (name, pts)) in series.iter().enumerate() {
        let c = COLOURS[k % COLOURS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, frame.px(x), frame.py(y));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{c}">{}</text>"#, PAD + 8.0, PAD + 14.0 * (k + 1) as f64, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Bars of `density` over consecutive `edges`, with an optional curve.
pub fn histogram(edges: &[f64], density: &[f64], overlay: Option<&[(f64, f64)]>, xlabel: &str, title: &str) -> String {
    let mut pts: Vec<(f64, f64)> = edges.iter().map(|&e| (e, 0.0)).collect();
    pts.extend(edges.windows(2).zip(density).map(|(w, &d)| (w[0], d)));
    if let Some(o) = overlay {
        pts.extend(o.iter().copied());
    }
    let frame = Frame::fit(pts.into_iter());
    let mut s = header(W, H, title);
    frame.axes(&mut s, xlabel, "density");
    for (w, &d) in edges.windows(2).zip(density) {
        let (x0, x1) = (frame.px(w[0]), frame.px(w[1]));
        let (y0, y1) = (frame.py(d), frame.py(0.0));
        let _ = writeln!(s, r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#3182bd"/>"##, x1 - x0, (y1 - y0).max(0.0));
    }
    if let Some(o) = overlay {
        let path: Vec<String> = o.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, path.join(" "), COLOURS[1]);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_are_closed_and_deterministic() {
        let h = heatmap(&[vec![0.0, 1.0], vec![-1.0, 0.5]], 1.0, "a < b");
        assert!(h.ends_with("</svg>\n") && h.contains("a &lt; b"));
        assert_eq!(h, heatmap(&[vec![0.0, 1.0], vec![-1.0, 0.5]], 1.0, "a < b"));
        assert_eq!(diverging(0.0), "#ffffff");
        let l = line_plot(&[("s", vec![(1.0, 2.0), (2.0, 3.0)])], "x", "y", "t");
        assert_eq!(l.matches("<circle").count(), 2);
        let hist = histogram(&[0.0, 1.0, 2.0], &[0.3, 0.7], Some(&[(0.0, 0.5), (2.0, 0.5)]), "x", "h");
        assert_eq!(hist.matches("<rect").count(), 2 + 2);
    }
}
