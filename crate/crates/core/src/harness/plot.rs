//! SVG overlays of the observed track, ground truth and top-ranked proposals.

use std::fmt::Write;

use super::pipeline::RankedSample;
use crate::metrics::likelihood_order;
use crate::trajectory::{integrate_steps, Point};

const SIZE: f64 = 400.0;
const PAD: f64 = 20.0;
const COLORS: [&str; 5] = ["#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"];

fn observed_positions(r: &RankedSample) -> Vec<Point> {
    let start = r
        .observed
        .iter()
        .fold(r.origin, |p, d| [p[0] - d[0], p[1] - d[1]]);
    let mut pts = vec![start];
    pts.extend(integrate_steps(&r.observed, start));
    pts
}

fn with_origin(origin: Point, deltas: &[Point]) -> Vec<Point> {
    let mut pts = vec![origin];
    pts.extend(integrate_steps(deltas, origin));
    pts
}

/// Renders the `k` most probable proposals (or the first `k` samples).
pub fn top_k_svg(r: &RankedSample, k: usize) -> String {
    let order: Vec<usize> = match likelihood_order(&r.set()) {
        Ok(o) => o,
        Err(_) => (0..r.proposals.len()).collect(),
    };
    let shown: Vec<usize> = order.into_iter().take(k).collect();
    let obs = observed_positions(r);
    let truth = with_origin(r.origin, &r.truth);
    let props: Vec<Vec<Point>> = shown
        .iter()
        .map(|&i| with_origin(r.origin, &r.proposals[i].deltas))
        .collect();

    let all = obs.iter().chain(&truth).chain(props.iter().flatten());
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in all {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
    let scale = (SIZE - 2.0 * PAD) / span;
    let map = |p: &Point| (PAD + (p[0] - lo[0]) * scale, SIZE - PAD - (p[1] - lo[1]) * scale);
    let poly = |pts: &[Point]| {
        pts.iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="6" y="14" font-size="11" font-family="sans-serif">{}</text>"#, r.id);
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        poly(&obs)
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#2ca02c" stroke-width="2"/>"##,
        poly(&truth)
    );
    for (rank, (i, pts)) in shown.iter().zip(&props).enumerate() {
        let color = COLORS[rank % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="4 3"/>"#,
            poly(pts)
        );
        let label = match (&r.probabilities, r.proposals[*i].cluster) {
            (Some(p), Some(c)) => format!("#{} cluster {c} p={:.3}", rank + 1, p[*i]),
            _ => format!("#{} sample {i}", rank + 1),
        };
        let _ = writeln!(
            s,
            r#"<text x="6" y="{}" font-size="10" font-family="sans-serif" fill="{color}">{label}</text>"#,
            30 + 12 * rank
        );
    }
    s.push_str("</svg>\n");
    s
}
