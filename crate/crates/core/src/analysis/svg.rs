//! Minimal SVG charts: score traces against distance to the obstacle, and
//! box summaries of projected stopping distance per threshold.

use std::fmt::Write;

use super::SweepResult;
use crate::sim::RunLog;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        M + (x - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - 2.0 * M)
    }

    fn py(&self, y: f64) -> f64 {
        H - M - (y - self.y0) / (self.y1 - self.y0).max(1e-12) * (H - 2.0 * M)
    }
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, ax: &Axes) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle">{title}</text>
<line x1="{M}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{M}" y1="{M}" x2="{M}" y2="{b}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>
<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{ylabel}</text>
<text x="{M}" y="{}" text-anchor="middle">{:.3}</text>
<text x="{r}" y="{}" text-anchor="middle">{:.3}</text>
<text x="{}" y="{b}" text-anchor="end">{:.3}</text>
<text x="{}" y="{}" text-anchor="end">{:.3}</text>
"#,
        W / 2.0,
        W / 2.0,
        H - 10.0,
        H / 2.0,
        H / 2.0,
        H - M + 15.0,
        ax.x0,
        H - M + 15.0,
        ax.x1,
        M - 4.0,
        ax.y0,
        M - 4.0,
        M + 4.0,
        ax.y1,
        b = H - M,
        r = W - M,
    );
}

/// OOD score against distance to the obstacle at capture, one polyline per
/// run, with each run's threshold and the risk-zone boundary.
pub fn score_trace_svg(logs: &[RunLog]) -> String {
    let points: Vec<Vec<(f64, f64)>> = logs
        .iter()
        .map(|l| {
            l.ood
                .iter()
                .filter_map(|r| {
                    l.frame(r.seq)
                        .map(|f| (l.config.obstacle_distance - f.x, r.score))
                })
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let x1 = all.clone().map(|p| p.0).fold(0.0f64, f64::max).max(0.7);
    let thresholds = logs.iter().map(|l| l.detector.threshold);
    let y1 = all.map(|p| p.1).chain(thresholds).fold(0.0f64, f64::max) * 1.05 + 1e-9;
    let ax = Axes {
        x0: x1,
        x1: 0.0,
        y0: 0.0,
        y1,
    };
    let mut out = String::new();
    frame(
        &mut out,
        "OOD score vs distance",
        "distance to obstacle (m)",
        "score",
        &ax,
    );
    if let Some(l) = logs.first() {
        let x = ax.px(l.config.risk_zone);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{M}" x2="{x:.1}" y2="{}" stroke="red" stroke-dasharray="4 3"/>"#,
            H - M
        );
        let y = ax.py(l.detector.threshold);
        let _ = writeln!(
            out,
            r#"<line x1="{M}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="gray" stroke-dasharray="2 2"/>"#,
            W - M
        );
    }
    for (i, pts) in points.iter().enumerate() {
        let hue = (i * 47) % 360;
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", ax.px(x), ax.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="hsl({hue},60%,40%)" stroke-width="1" points="{}"/>"#,
            path.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Box (quartiles) and whiskers (range) of projected stopping distance for
/// every threshold of a sweep.
pub fn sweep_box_svg(result: &SweepResult) -> String {
    let n = result.rows.len().max(1) as f64;
    let y1 = result
        .rows
        .iter()
        .flat_map(|r| r.runs.iter().map(|p| p.distance))
        .fold(0.0f64, f64::max)
        .max(0.1);
    let ax = Axes {
        x0: 0.0,
        x1: n,
        y0: 0.0,
        y1,
    };
    let mut out = String::new();
    frame(
        &mut out,
        "Projected stopping distance",
        "threshold",
        "distance (m)",
        &ax,
    );
    for (i, row) in result.rows.iter().enumerate() {
        let mut d = row.distances();
        d.sort_by(f64::total_cmp);
        if d.is_empty() {
            continue;
        }
        let q = |p: f64| d[((d.len() - 1) as f64 * p).round() as usize];
        let cx = ax.px(i as f64 + 0.5);
        let hw = 0.3 * (W - 2.0 * M) / n;
        let (lo, q1, med, q3, hi) = (q(0.0), q(0.25), q(0.5), q(0.75), q(1.0));
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>
<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="lightsteelblue" stroke="black"/>
<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>
<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#,
            ax.py(lo),
            ax.py(hi),
            cx - hw,
            ax.py(q3),
            2.0 * hw,
            (ax.py(q1) - ax.py(q3)).max(0.5),
            cx - hw,
            ax.py(med),
            cx + hw,
            ax.py(med),
            H - M + 28.0,
            row.threshold
        );
    }
    out.push_str("</svg>\n");
    out
}
