//! Gesture plots as SVG line charts plus the plotted data as CSV.
//!
//! A single gesture is drawn with some surrounding context and two vertical
//! markers at its refined boundaries. Several gestures are superimposed,
//! aligned at their refined start, without markers.

use std::fmt::Write as _;

use crate::ingest::AccelSample;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;
const AXIS_COLORS: [&str; 3] = ["#d62728", "#2ca02c", "#1f77b4"];
const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// One curve set to draw: a gesture's samples and where its refined span
/// starts and ends within them (`start..end`, sample indices).
#[derive(Debug, Clone, Copy)]
pub struct PlotGesture<'a> {
    pub name: &'a str,
    pub samples: &'a [AccelSample],
    pub start: usize,
    pub end: usize,
}

/// `gesture,t_ms,x,y,z` for every plotted sample, timestamps as recorded.
pub fn gestures_csv(gestures: &[PlotGesture]) -> String {
    let mut out = String::from("gesture,t_ms,x,y,z\n");
    for g in gestures {
        for s in g.samples {
            let _ = writeln!(out, "{},{},{},{},{}", g.name, s.t_ms, s.x, s.y, s.z);
        }
    }
    out
}

struct Frame {
    t0: f64,
    t1: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN + (t - self.t0) / (self.t1 - self.t0).max(1e-9) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.lo) / (self.hi - self.lo).max(1e-9) * (HEIGHT - 2.0 * MARGIN)
    }
}

/// Seconds relative to the gesture's refined start.
fn rel_seconds(g: &PlotGesture, i: usize) -> f64 {
    let origin = g.samples.get(g.start).map_or(0, |s| s.t_ms) as f64;
    (g.samples[i].t_ms as f64 - origin) / 1000.0
}

fn frame(gestures: &[PlotGesture]) -> Frame {
    let mut f = Frame {
        t0: f64::INFINITY,
        t1: f64::NEG_INFINITY,
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };
    for g in gestures {
        for (i, s) in g.samples.iter().enumerate() {
            let t = rel_seconds(g, i);
            f.t0 = f.t0.min(t);
            f.t1 = f.t1.max(t);
            for v in s.axes() {
                f.lo = f.lo.min(v);
                f.hi = f.hi.max(v);
            }
        }
    }
    if !f.t0.is_finite() {
        (f.t0, f.t1, f.lo, f.hi) = (0.0, 1.0, -1.0, 1.0);
    }
    f
}

fn open_svg(out: &mut String, title: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path class="frame" d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{}" font-size="11">{:.1} s</text><text x="{x1}" y="{}" font-size="11" text-anchor="end">{:.1} s</text>"#,
        y1 + 16.0,
        f.t0,
        y1 + 16.0,
        f.t1
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-size="11">{:.1}</text><text x="4" y="{}" font-size="11">{:.1}</text>"#,
        y0 + 4.0,
        f.hi,
        y1,
        f.lo
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polylines(out: &mut String, g: &PlotGesture, f: &Frame, opacity: f64) {
    for axis in 0..3 {
        let mut points = String::new();
        for (i, s) in g.samples.iter().enumerate() {
            let v = s.axes()[axis];
            let _ = write!(points, "{:.2},{:.2} ", f.x(rel_seconds(g, i)), f.y(v));
        }
        let _ = writeln!(
            out,
            r#"<polyline class="axis-{}" data-gesture="{}" points="{}" fill="none" stroke="{}" stroke-opacity="{opacity}" stroke-width="1"/>"#,
            AXIS_NAMES[axis],
            escape(g.name),
            points.trim_end(),
            AXIS_COLORS[axis]
        );
    }
}

/// One gesture with its context and boundary markers.
pub fn single_svg(g: &PlotGesture) -> String {
    let f = frame(std::slice::from_ref(g));
    let mut out = String::new();
    open_svg(&mut out, g.name, &f);
    polylines(&mut out, g, &f, 1.0);
    let end_t = match g.end.checked_sub(1) {
        Some(last) if last < g.samples.len() => rel_seconds(g, last),
        _ => 0.0,
    };
    for t in [0.0, end_t] {
        let x = f.x(t);
        let _ = writeln!(
            out,
            r#"<line class="boundary" x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{}" stroke="black" stroke-dasharray="4 3"/>"#,
            HEIGHT - MARGIN
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Several gestures overlaid, aligned at their refined starts.
pub fn superimposed_svg(title: &str, gestures: &[PlotGesture]) -> String {
    let f = frame(gestures);
    let mut out = String::new();
    open_svg(&mut out, title, &f);
    for g in gestures {
        polylines(&mut out, g, &f, 0.7);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize) -> Vec<AccelSample> {
        (0..n)
            .map(|i| AccelSample::new(40 * i as u64, i as f32, -(i as f32), 9.81))
            .collect()
    }

    #[test]
    fn single_has_three_lines_and_two_markers() {
        let s = samples(50);
        let g = PlotGesture { name: "p01/s01/1", samples: &s, start: 10, end: 40 };
        let svg = single_svg(&g);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches(r#"class="boundary""#).count(), 2);
    }

    #[test]
    fn superimposed_has_three_lines_per_gesture() {
        let s = samples(20);
        let gs: Vec<PlotGesture> = ["a", "b", "c"]
            .iter()
            .map(|name| PlotGesture { name, samples: &s, start: 0, end: 20 })
            .collect();
        let svg = superimposed_svg("three", &gs);
        assert_eq!(svg.matches("<polyline").count(), 9);
        assert_eq!(svg.matches(r#"class="boundary""#).count(), 0);
    }

    #[test]
    fn csv_rows() {
        let s = samples(2);
        let csv = gestures_csv(&[PlotGesture { name: "g", samples: &s, start: 0, end: 2 }]);
        assert_eq!(csv, "gesture,t_ms,x,y,z\ng,0,0,-0,9.81\ng,40,1,-1,9.81\n");
    }
}
