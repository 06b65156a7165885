//! Scanline infill for closed regions.

use alloc::vec::Vec;

use super::{CompileError, CompileParams, PaintPath, PathKind, Region};
use crate::math::Vec2;
#[allow(unused_imports)]
use crate::math::Float;

/// Coincident crossings closer than this are treated as one vertex hit.
const COINCIDENT: f64 = 1e-12;

/// Horizontal, alternating-direction infill spans for a region (even-odd
/// rule over all of its rings). Spans come out with the standard lead
/// extensions and `PathKind::Infill`; ids are left at zero.
pub fn generate_infill(region: &Region, params: &CompileParams) -> Result<Vec<PaintPath>, CompileError> {
    let edges: Vec<(Vec2, Vec2)> = region
        .rings
        .iter()
        .filter(|r| r.len() >= 3)
        .flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
        .collect();
    let area: f64 = region.rings.iter().map(|r| signed_area(r).abs()).sum();
    if edges.is_empty() || area <= 1e-12 {
        return Ok(Vec::new());
    }
    let (v_min, v_max) = edges
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, _)| (lo.min(a.y), hi.max(a.y)));

    let spacing = params.infill_spacing;
    let mut spans: Vec<(Vec2, Vec2)> = Vec::new();
    let mut prev_exit: Option<Vec2> = None;
    let mut k = 0usize;
    loop {
        let v = v_min + spacing * 0.5 + spacing * k as f64;
        if v >= v_max {
            break;
        }
        let mut xs = crossings(&edges, v);
        if xs.len() % 2 != 0 {
            return Err(CompileError::OddCrossings { v });
        }
        let forward = k % 2 == 0;
        let mut line: Vec<(f64, f64)> = xs
            .chunks_mut(2)
            .map(|c| (c[0], c[1]))
            .filter(|(a, b)| b - a >= params.infill_min_span)
            .collect();
        if !forward {
            line.reverse();
        }
        for (a, b) in line {
            let (mut s, mut e) = if forward {
                (Vec2::new(a, v), Vec2::new(b, v))
            } else {
                (Vec2::new(b, v), Vec2::new(a, v))
            };
            // Flip a span when entering from its far end is a shorter hop,
            // which happens around voids that change the span count.
            if let Some(p) = prev_exit {
                if p.dist(e) < p.dist(s) {
                    core::mem::swap(&mut s, &mut e);
                }
            }
            spans.push((s, e));
            prev_exit = Some(e);
        }
        k += 1;
    }

    let ext = params.extension_len;
    Ok(spans
        .into_iter()
        .map(|(s, e)| {
            let t = (e - s).normalized();
            let points = if ext > 0.0 {
                alloc::vec![s - t * ext, s, e, e + t * ext]
            } else {
                alloc::vec![s, e]
            };
            PaintPath { id: 0, kind: PathKind::Infill, points, lead_in_len: ext, lead_out_len: ext }
        })
        .collect())
}

/// Sorted crossing abscissae of the horizontal line `v` with all edges.
/// Edges use the half-open rule `[min_v, max_v)` so a vertex shared by two
/// edges is counted once when the contour passes through it and zero or two
/// times at a local extremum.
fn crossings(edges: &[(Vec2, Vec2)], v: f64) -> Vec<f64> {
    let mut xs: Vec<f64> = edges
        .iter()
        .filter(|(a, b)| a.y != b.y)
        .filter_map(|(a, b)| {
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            if v >= lo.y && v < hi.y {
                Some(lo.x + (v - lo.y) * (hi.x - lo.x) / (hi.y - lo.y))
            } else {
                None
            }
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    // Coincident pairs (extremum vertex) cancel out.
    let mut out: Vec<f64> = Vec::with_capacity(xs.len());
    for x in xs {
        match out.last() {
            Some(&last) if (x - last).abs() <= COINCIDENT && out.len() % 2 == 1 => {
                // would form a zero-length span: drop both
                out.pop();
            }
            _ => out.push(x),
        }
    }
    out
}

fn signed_area(ring: &[Vec2]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].cross(ring[(i + 1) % n])).sum::<f64>() * 0.5
}
