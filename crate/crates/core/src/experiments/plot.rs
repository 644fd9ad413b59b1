//! Minimal log–log SVG rendering of approximation vs Monte Carlo curves.

use std::fmt::Write;

use super::runner::ResultRow;

const WIDTH: f64 = 360.0;
const HEIGHT: f64 = 300.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 14.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 44.0;

/// One panel: tail probability against `b`, both on log scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub approx: Vec<(f64, f64)>,
    pub mc: Vec<(f64, f64)>,
}

impl Panel {
    pub fn from_rows(title: &str, rows: &[ResultRow]) -> Self {
        let keep = |b: f64, p: Option<f64>| p.filter(|&p| p > 0.0 && b > 0.0).map(|p| (b, p));
        Self {
            title: title.to_string(),
            approx: rows.iter().filter_map(|r| keep(r.b, r.approx)).collect(),
            mc: rows.iter().filter_map(|r| keep(r.b, r.mc_estimate)).collect(),
        }
    }
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn spanning(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi }
    }

    fn unit(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    /// Tick positions in log10 units: decades, plus 2 and 5 when the span is short.
    fn ticks(&self) -> Vec<f64> {
        let mantissas: &[f64] = if self.hi - self.lo < 2.0 { &[1.0, 2.0, 5.0] } else { &[1.0] };
        let mut out = Vec::new();
        for e in (self.lo.floor() as i32)..=(self.hi.ceil() as i32) {
            for m in mantissas {
                let v = m.log10() + e as f64;
                if v >= self.lo - 1e-9 && v <= self.hi + 1e-9 {
                    out.push(v);
                }
            }
        }
        out
    }
}

fn label(log_value: f64) -> String {
    let v = 10f64.powf(log_value);
    if (log_value - log_value.round()).abs() < 1e-9 && !(-2..=3).contains(&(log_value.round() as i32)) {
        format!("1e{}", log_value.round() as i32)
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

fn polyline(out: &mut String, points: &[(f64, f64)], x: &Axis, y: &Axis, ox: f64, style: &str) {
    if points.is_empty() {
        return;
    }
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let coords: Vec<String> = points
        .iter()
        .map(|&(b, p)| {
            let px = ox + MARGIN_LEFT + x.unit(b.log10()) * pw;
            let py = MARGIN_TOP + (1.0 - y.unit(p.log10())) * ph;
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" "));
}

fn panel(out: &mut String, p: &Panel, ox: f64) {
    let x = Axis::spanning(p.approx.iter().chain(&p.mc).map(|(b, _)| b.log10()));
    let y = Axis::spanning(p.approx.iter().chain(&p.mc).map(|(_, v)| v.log10()));
    let y = Axis {
        lo: y.lo.floor(),
        hi: y.hi.ceil(),
    };
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let (left, top) = (ox + MARGIN_LEFT, MARGIN_TOP);

    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="dimgray"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        left + pw / 2.0,
        p.title
    );
    for t in x.ticks() {
        let px = left + x.unit(t) * pw;
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="dimgray"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            top + ph,
            top + ph + 4.0,
            top + ph + 16.0,
            label(t)
        );
    }
    for t in y.ticks() {
        let py = top + (1.0 - y.unit(t)) * ph;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="dimgray"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            left - 4.0,
            left - 6.0,
            py + 3.5,
            label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">b</text>"#,
        left + pw / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">tail probability</text>"#,
        ox + 14.0,
        top + ph / 2.0,
        ox + 14.0,
        top + ph / 2.0
    );
    polyline(out, &p.mc, &x, &y, ox, r#"stroke="black" stroke-width="1.5""#);
    polyline(
        out,
        &p.approx,
        &x,
        &y,
        ox,
        r#"stroke="red" stroke-width="1.5" stroke-dasharray="6 4""#,
    );
}

/// Panels side by side; approximation dashed red, Monte Carlo solid black.
pub fn render_svg(panels: &[Panel]) -> String {
    let total = WIDTH * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{}" viewBox="0 0 {total} {}" font-family="sans-serif">"#,
        HEIGHT + 20.0,
        HEIGHT + 20.0
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        panel(&mut out, p, k as f64 * WIDTH);
    }
    let _ = writeln!(
        out,
        r#"<g font-size="11"><line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="red" stroke-dasharray="6 4"/><text x="{3}" y="{4}">approximation</text><line x1="{5}" y1="{1}" x2="{6}" y2="{1}" stroke="black"/><text x="{7}" y="{4}">Monte Carlo</text></g>"#,
        MARGIN_LEFT,
        HEIGHT + 8.0,
        MARGIN_LEFT + 24.0,
        MARGIN_LEFT + 28.0,
        HEIGHT + 12.0,
        MARGIN_LEFT + 120.0,
        MARGIN_LEFT + 144.0,
        MARGIN_LEFT + 148.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_curves() {
        let p = Panel {
            title: "T = [-2, 2]".into(),
            approx: vec![(10.0, 0.1), (20.0, 0.01), (40.0, 1e-4)],
            mc: vec![(10.0, 0.12), (20.0, 0.011)],
        };
        let svg = render_svg(&[p.clone(), p]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("stroke-dasharray=\"6 4\" points").count(), 2);
        assert!(svg.contains(">1e-4<"));
    }

    #[test]
    fn ticks_cover_range() {
        let a = Axis { lo: 1.0, hi: 2.0 };
        let t = a.ticks();
        assert_eq!(t.first(), Some(&1.0));
        assert!(t.contains(&(20f64.log10())));
        assert_eq!(label(20f64.log10()), "20");
    }
}
