//! Minimal SVG charts with fixed geometry.
//!
//! Every panel is 800×400 user units with a 70-unit left margin, 30-unit
//! right margin, 40-unit top margin and 50-unit bottom margin. Figures stack
//! panels vertically. Output depends only on the data, so identical inputs
//! render identical bytes.

use std::fmt::Write;

pub const PANEL_WIDTH: f64 = 800.0;
pub const PANEL_HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub enum Panel {
    Lines { title: String, x_label: String, y_label: String, series: Vec<Series> },
    /// Horizontal bars; negative values extend left of the axis.
    Bars { title: String, x_label: String, bars: Vec<(String, f64)> },
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-3..1e5).contains(&v.abs()) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        format!("{v:.2e}")
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

struct Frame {
    y0: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (PANEL_WIDTH - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (PANEL_HEIGHT - TOP - BOTTOM)
    }
}

fn axes(out: &mut String, f: &Frame, title: &str, x_label: &str, y_label: &str, y_ticks: bool) {
    let (l, r) = (LEFT, PANEL_WIDTH - RIGHT);
    let (t, b) = (f.y0 + TOP, f.y0 + PANEL_HEIGHT - BOTTOM);
    let _ = writeln!(out, r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##, r - l, b - t);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="16">{}</text>"#, PANEL_WIDTH / 2.0, f.y0 + 25.0, escape(title));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, (l + r) / 2.0, b + 40.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text transform="translate(15 {}) rotate(-90)" text-anchor="middle" font-size="12">{}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
    for i in 0..=4 {
        let xv = f.x.0 + (f.x.1 - f.x.0) * f64::from(i) / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, f.px(xv), b + 15.0, tick_label(xv));
        if y_ticks {
            let yv = f.y.0 + (f.y.1 - f.y.0) * f64::from(i) / 4.0;
            let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#, l - 5.0, f.py(yv) + 3.0, tick_label(yv));
        }
    }
}

fn lines(out: &mut String, y0: f64, title: &str, x_label: &str, y_label: &str, series: &[Series]) {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let f = Frame { y0, x: bounds(all().map(|p| p.0)), y: bounds(all().map(|p| p.1)) };
    axes(out, &f, title, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            LEFT + 10.0,
            y0 + TOP + 15.0 + 14.0 * i as f64,
            escape(&s.name)
        );
    }
}

fn bars(out: &mut String, y0: f64, title: &str, x_label: &str, bars: &[(String, f64)]) {
    let lo = bars.iter().map(|b| b.1).fold(0.0, f64::min);
    let hi = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let f = Frame { y0, x: if lo == hi { (0.0, 1.0) } else { (lo, hi) }, y: (0.0, bars.len().max(1) as f64) };
    axes(out, &f, title, x_label, "", false);
    let zero = f.px(0.0);
    let step = (PANEL_HEIGHT - TOP - BOTTOM) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = y0 + TOP + step * i as f64;
        let (x, w) = if *v >= 0.0 { (zero, f.px(*v) - zero) } else { (f.px(*v), zero - f.px(*v)) };
        let color = if *v >= 0.0 { PALETTE[0] } else { PALETTE[1] };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{color}"><title>{}</title></rect>"#,
            y + step * 0.1,
            step * 0.8,
            escape(label)
        );
        if step >= 8.0 {
            let (lx, anchor) = if *v >= 0.0 { (zero - 3.0, "end") } else { (zero + 3.0, "start") };
            let _ = writeln!(
                out,
                r#"<text x="{lx:.2}" y="{:.2}" text-anchor="{anchor}" font-size="{:.1}">{}</text>"#,
                y + step * 0.75,
                (step * 0.7).min(11.0),
                escape(label)
            );
        }
    }
}

/// Renders panels stacked top to bottom. `note` goes into a leading comment.
pub fn render(note: &str, panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_WIDTH}\" height=\"{height}\" viewBox=\"0 0 {PANEL_WIDTH} {height}\" font-family=\"sans-serif\">\n<!-- {} -->\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        note.replace("--", "- -")
    );
    for (i, p) in panels.iter().enumerate() {
        let y0 = PANEL_HEIGHT * i as f64;
        match p {
            Panel::Lines { title, x_label, y_label, series } => lines(&mut out, y0, title, x_label, y_label, series),
            Panel::Bars { title, x_label, bars: b } => bars(&mut out, y0, title, x_label, b),
        }
    }
    out.push_str("</svg>\n");
    out
}
