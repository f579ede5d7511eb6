//! Minimal hand-written SVG charts. Coordinates are printed with two
//! decimals so the output is byte-stable.

use std::fmt::Write;

use super::RunMetrics;
use crate::control::RunLog;

const W: f64 = 900.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64, log_y: bool) -> Self {
        let (x1, y1) = (if x1 > x0 { x1 } else { x0 + 1.0 }, if y1 > y0 { y1 } else { y0 + 1.0 });
        Self { x0, x1, y0, y1, log_y }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log_y {
            (v.max(self.y0).log10(), self.y0.log10(), self.y1.log10())
        } else {
            (v, self.y0, self.y1)
        };
        H - BOTTOM - (v - lo) / (hi - lo) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, y_ticks: &[f64]) {
    let (bx, by) = (f.x(f.x0), H - BOTTOM);
    let _ = writeln!(
        out,
        "<path d=\"M{bx:.2},{TOP:.2} V{by:.2} H{:.2}\" stroke=\"black\" fill=\"none\"/>",
        W - RIGHT
    );
    for &t in y_ticks {
        let y = f.y(t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn linear_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, extra: &str) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, f.x(*x), f.y(*y));
    }
    let _ = writeln!(out, "<path d=\"{d}\" stroke=\"{color}\" fill=\"none\" {extra}/>");
}

fn legend(out: &mut String, items: &[(&str, &str)]) {
    for (i, (name, color)) in items.iter().enumerate() {
        let x = LEFT + 10.0 + 170.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            TOP + 4.0,
            x + 16.0,
            TOP + 14.0,
            escape(name)
        );
    }
}

/// True and predicted building power over steps `[from, to)` with the caps
/// of the logged events shaded.
pub fn power_chart(log: &RunLog, from: usize, to: usize, title: &str) -> String {
    let to = to.min(log.records.len());
    let from = from.min(to);
    let recs = &log.records[from..to];
    let mut hi = recs
        .iter()
        .flat_map(|r| [Some(r.true_power), r.predicted_power, r.p_max])
        .flatten()
        .fold(0.0, f64::max);
    hi *= 1.1;
    let f = Frame::new(from as f64, to as f64, 0.0, hi / 1000.0, false);
    let mut out = String::new();
    header(&mut out, title);
    for e in log.events.iter().filter(|e| e.end > from && e.start < to) {
        let (s, t) = (e.start.max(from), e.end.min(to));
        let cap = e.p_max[s - e.start] / 1000.0;
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#f4cccc\" opacity=\"0.6\"/>",
            f.x(s as f64),
            f.y(hi / 1000.0),
            f.x(t as f64) - f.x(s as f64),
            f.y(cap) - f.y(hi / 1000.0)
        );
        let caps: Vec<(f64, f64)> = (s..t)
            .flat_map(|k| {
                let c = e.p_max[k - e.start] / 1000.0;
                [(k as f64, c), (k as f64 + 1.0, c)]
            })
            .collect();
        polyline(&mut out, &f, &caps, "#990000", "stroke-width=\"1.5\"");
    }
    axes(&mut out, &f, "timestep", "building power (kW)", &linear_ticks(0.0, hi / 1000.0, 5));
    let truth: Vec<(f64, f64)> = recs.iter().map(|r| (r.t as f64 + 0.5, r.true_power / 1000.0)).collect();
    polyline(&mut out, &f, &truth, PALETTE[0], "stroke-width=\"1.5\"");
    for r in recs {
        if let Some(p) = r.predicted_power {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{}\"/>",
                f.x(r.t as f64 + 0.5),
                f.y(p / 1000.0),
                PALETTE[3]
            );
        }
    }
    legend(&mut out, &[("true power", PALETTE[0]), ("predicted", PALETTE[3]), ("cap", "#990000")]);
    out.push_str("</svg>\n");
    out
}

/// Primal residual against ADMM iteration, one curve per episode, log scale.
pub fn residual_chart(log: &RunLog, title: &str) -> String {
    let curves: Vec<Vec<f64>> = log
        .episodes
        .iter()
        .filter(|e| !e.residuals.is_empty())
        .map(|e| e.residuals.iter().map(|r| r.primal_residual).collect())
        .collect();
    let max_iter = curves.iter().map(|c| c.len()).max().unwrap_or(1);
    let vals = curves.iter().flatten().copied().filter(|v| *v > 0.0);
    let lo = vals.clone().fold(f64::INFINITY, f64::min);
    let hi = vals.fold(0.0, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > 0.0 {
        (10f64.powf(lo.log10().floor()), 10f64.powf(hi.log10().ceil()))
    } else {
        (1e-3, 1.0)
    };
    let f = Frame::new(1.0, max_iter.max(2) as f64, lo, hi, true);
    let mut out = String::new();
    header(&mut out, title);
    let decades = (hi.log10() - lo.log10()).round() as i32;
    let ticks: Vec<f64> = (0..=decades).map(|k| lo * 10f64.powi(k)).collect();
    axes(&mut out, &f, "ADMM iteration", "primal residual", &ticks);
    for (i, c) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = c.iter().enumerate().map(|(k, v)| ((k + 1) as f64, *v)).collect();
        polyline(&mut out, &f, &pts, PALETTE[i % PALETTE.len()], "stroke-opacity=\"0.5\"");
    }
    out.push_str("</svg>\n");
    out
}

/// Actual violation per event, one bar per run.
pub fn slack_chart(runs: &[RunMetrics], title: &str) -> String {
    let n_events = runs.iter().map(|r| r.events.len()).max().unwrap_or(0);
    let f = Frame::new(0.0, n_events.max(1) as f64, 0.0, 100.0, false);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "event", "steps above cap (%)", &linear_ticks(0.0, 100.0, 5));
    let slot = (f.x(1.0) - f.x(0.0)) / (runs.len().max(1) as f64 + 1.0);
    for (j, r) in runs.iter().enumerate() {
        for (i, v) in r.events.iter().enumerate() {
            let x = f.x(i as f64) + slot * (j as f64 + 0.5);
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{slot:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                f.y(v.actual_pct),
                f.y(0.0) - f.y(v.actual_pct),
                PALETTE[j % PALETTE.len()]
            );
        }
    }
    let items: Vec<(&str, &str)> = runs
        .iter()
        .enumerate()
        .map(|(j, r)| (r.name.as_str(), PALETTE[j % PALETTE.len()]))
        .collect();
    legend(&mut out, &items);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planners::DrEvent;
    use crate::report::tests::log_with;

    #[test]
    fn charts_are_well_formed_and_stable() {
        let ev = vec![DrEvent::constant(4, 10, 80.0)];
        let power: Vec<f64> = (0..16).map(|t| 60.0 + t as f64 * 2.0).collect();
        let preds: Vec<Option<f64>> = (0..16).map(|t| (t % 2 == 0).then_some(70.0)).collect();
        let log = log_with(&power, &preds, &[], ev);
        let a = power_chart(&log, 0, 16, "power & cap");
        assert_eq!(a, power_chart(&log, 0, 16, "power & cap"));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("power &amp; cap"));
        assert_eq!(a.matches("<circle").count(), 8);
        let m = RunMetrics::from_log("a", &log).unwrap();
        let s = slack_chart(&[m.clone(), m], "slack");
        assert_eq!(s.matches("<rect").count(), 1 + 2 + 2);
        let r = residual_chart(&log, "residuals");
        assert!(r.contains("</svg>"));
        assert!(!a.contains("NaN") && !s.contains("NaN") && !r.contains("NaN"));
    }
}
