use alloc::vec::Vec;

use super::{CompileParams, PaintPath, PathKind, Polyline, JOIN_TOL, MIN_VERTEX_SEP};
use crate::math::Vec2;
#[allow(unused_imports)]
use crate::math::Float;

/// Turn angle in degrees between travelling along `a` and then along `b`.
pub fn turn_angle_deg(a: Vec2, b: Vec2) -> f64 {
    let (a, b) = (a.normalized(), b.normalized());
    a.cross(b).atan2(a.dot(b)).abs().to_degrees()
}

fn start_tangent(p: &[Vec2]) -> Vec2 {
    p[1] - p[0]
}

fn end_tangent(p: &[Vec2]) -> Vec2 {
    p[p.len() - 1] - p[p.len() - 2]
}

/// Splits polylines at sharp interior corners, then concatenates pieces
/// whose touching endpoints continue smoothly.
pub fn join_split_segments(polylines: Vec<Polyline>, params: &CompileParams) -> Vec<Polyline> {
    let max = params.join_angle_max;
    let mut pieces: Vec<Polyline> = Vec::new();
    for pl in polylines {
        if pl.points.len() < 2 {
            continue;
        }
        if pl.closed {
            split_closed(pl.points, max, &mut pieces);
        } else {
            split_open(pl.points, max, &mut pieces);
        }
    }
    join(pieces, max)
}

fn split_open(points: Vec<Vec2>, max: f64, out: &mut Vec<Polyline>) {
    let mut current = alloc::vec![points[0]];
    for i in 1..points.len() {
        current.push(points[i]);
        if i + 1 < points.len() && turn_angle_deg(points[i] - points[i - 1], points[i + 1] - points[i]) > max {
            out.push(Polyline::open(core::mem::replace(&mut current, alloc::vec![points[i]])));
        }
    }
    if current.len() >= 2 {
        out.push(Polyline::open(current));
    }
}

fn split_closed(points: Vec<Vec2>, max: f64, out: &mut Vec<Polyline>) {
    let n = points.len();
    if n < 3 {
        split_open(points, max, out);
        return;
    }
    let sharp = |i: usize| {
        let prev = points[(i + n - 1) % n];
        let next = points[(i + 1) % n];
        turn_angle_deg(points[i] - prev, next - points[i]) > max
    };
    match (0..n).find(|&i| sharp(i)) {
        None => out.push(Polyline { points, closed: true }),
        Some(first) => {
            // Open the ring at the first corner and split the rest normally.
            let mut ring: Vec<Vec2> = (0..=n).map(|k| points[(first + k) % n]).collect();
            ring.dedup_by(|a, b| a.dist(*b) <= MIN_VERTEX_SEP);
            split_open(ring, max, out);
        }
    }
}

#[derive(Clone, Copy)]
enum Joint {
    /// a.end -> b.start
    EndStart,
    /// a.end -> reversed b
    EndEnd,
    /// reversed a -> b.start
    StartStart,
    /// b.end -> a.start (b then a)
    StartEnd,
}

fn join(mut pieces: Vec<Polyline>, max: f64) -> Vec<Polyline> {
    loop {
        let mut best: Option<(f64, usize, usize, Joint)> = None;
        for i in 0..pieces.len() {
            if pieces[i].closed {
                continue;
            }
            for j in i + 1..pieces.len() {
                if pieces[j].closed {
                    continue;
                }
                let (a, b) = (&pieces[i].points, &pieces[j].points);
                let (a0, a1, b0, b1) = (a[0], a[a.len() - 1], b[0], b[b.len() - 1]);
                let candidates = [
                    (a1.dist(b0), turn_angle_deg(end_tangent(a), start_tangent(b)), Joint::EndStart),
                    (a1.dist(b1), turn_angle_deg(end_tangent(a), -end_tangent(b)), Joint::EndEnd),
                    (a0.dist(b0), turn_angle_deg(-start_tangent(a), start_tangent(b)), Joint::StartStart),
                    (a0.dist(b1), turn_angle_deg(end_tangent(b), start_tangent(a)), Joint::StartEnd),
                ];
                for (gap, turn, joint) in candidates {
                    if gap <= JOIN_TOL && turn <= max && best.is_none_or(|(t, ..)| turn < t) {
                        best = Some((turn, i, j, joint));
                    }
                }
            }
        }
        let Some((_, i, j, joint)) = best else { break };
        let b = pieces.remove(j);
        let a = &mut pieces[i];
        let mut bp = b.points;
        match joint {
            Joint::EndStart => {}
            Joint::EndEnd => bp.reverse(),
            Joint::StartStart => a.points.reverse(),
            Joint::StartEnd => {
                core::mem::swap(&mut a.points, &mut bp);
            }
        }
        // bp now continues a.points; drop the duplicated junction vertex.
        a.points.extend(bp.into_iter().skip(1));
        close_if_smooth(a, max);
    }
    pieces
}

fn close_if_smooth(pl: &mut Polyline, max: f64) {
    let p = &pl.points;
    if p.len() >= 4 && p[0].dist(p[p.len() - 1]) <= JOIN_TOL {
        let turn = turn_angle_deg(end_tangent(p), start_tangent(p));
        if turn <= max {
            pl.points.pop();
            pl.closed = true;
        }
    }
}

/// Drops open polylines shorter than `min_path_len`; closed ones are kept.
pub fn prune_short_paths(polylines: Vec<Polyline>, params: &CompileParams) -> Vec<Polyline> {
    polylines
        .into_iter()
        .filter(|pl| pl.closed || pl.length() >= params.min_path_len)
        .collect()
}

/// Adds straight, non-drawing extensions along the start and end tangents.
pub fn add_lead_in_out(polyline: &Polyline, params: &CompileParams) -> PaintPath {
    let mut pts = polyline.points.clone();
    if polyline.closed {
        pts.push(pts[0]);
    }
    let ext = params.extension_len;
    let mut points = Vec::with_capacity(pts.len() + 2);
    let (mut lead_in, mut lead_out) = (0.0, 0.0);
    if ext > 0.0 && pts.len() >= 2 {
        let t0 = start_tangent(&pts).normalized();
        let t1 = end_tangent(&pts).normalized();
        points.push(pts[0] - t0 * ext);
        points.extend_from_slice(&pts);
        points.push(pts[pts.len() - 1] + t1 * ext);
        lead_in = ext;
        lead_out = ext;
    } else {
        points = pts;
    }
    PaintPath { id: 0, kind: PathKind::Outline, points, lead_in_len: lead_in, lead_out_len: lead_out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p() -> CompileParams {
        CompileParams::default()
    }

    fn seg(a: (f64, f64), b: (f64, f64)) -> Polyline {
        Polyline::open(vec![Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)])
    }

    fn max_interior_turn(pl: &Polyline) -> f64 {
        pl.points
            .windows(3)
            .map(|w| turn_angle_deg(w[1] - w[0], w[2] - w[1]))
            .fold(0.0, f64::max)
    }

    #[test]
    fn collinear_segments_join() {
        let out = join_split_segments(vec![seg((0.0, 0.0), (1.0, 0.0)), seg((1.0, 0.0), (2.0, 0.0))], &p());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 3);
        assert!((out[0].length() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_neighbour_is_joined() {
        let out = join_split_segments(vec![seg((0.0, 0.0), (1.0, 0.0)), seg((2.0, 0.0), (1.0005, 0.0))], &p());
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn l_shape_splits_at_corner() {
        let l = Polyline::open(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)]);
        let out = join_split_segments(vec![l], &p());
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].points, vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
        assert_eq!(out[1].points, vec![Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)]);
    }

    #[test]
    fn gently_turning_chain_becomes_one() {
        // Ten unit segments, each turned 10 degrees from the last, as separate pieces.
        let mut pieces = Vec::new();
        let mut at = Vec2::ZERO;
        for k in 0..10 {
            let a = (10.0 * k as f64).to_radians();
            let next = at + Vec2::new(a.cos(), a.sin()) * 0.1;
            pieces.push(Polyline::open(vec![at, next]));
            at = next;
        }
        // Shuffle deterministically so joins have to happen in both directions.
        pieces.swap(0, 7);
        pieces.swap(3, 9);
        let out = join_split_segments(pieces, &p());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points.len(), 11);
        assert!(max_interior_turn(&out[0]) <= 30.0 + 1e-9);
        for w in out[0].points.windows(3) {
            let t = turn_angle_deg(w[1] - w[0], w[2] - w[1]);
            assert!((t - 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn square_ring_opens_into_sides() {
        let ring = Polyline {
            points: vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)],
            closed: true,
        };
        let out = join_split_segments(vec![ring], &p());
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|pl| (pl.length() - 1.0).abs() < 1e-12 && !pl.closed));
    }

    #[test]
    fn smooth_ring_stays_closed() {
        let n = 36;
        let pts = (0..n)
            .map(|k| {
                let a = core::f64::consts::TAU * k as f64 / n as f64;
                Vec2::new(a.cos(), a.sin())
            })
            .collect();
        let out = join_split_segments(vec![Polyline { points: pts, closed: true }], &p());
        assert_eq!(out.len(), 1);
        assert!(out[0].closed);
    }

    #[test]
    fn no_joinable_pairs_remain() {
        let input = vec![
            seg((0.0, 0.0), (0.5, 0.0)),
            seg((0.5, 0.0), (0.5, 0.5)),
            seg((0.5, 0.5), (0.9, 0.9)),
            seg((0.9, 0.9), (1.3, 1.3)),
            seg((3.0, 3.0), (3.2, 3.0)),
        ];
        let out = join_split_segments(input, &p());
        for (i, a) in out.iter().enumerate() {
            assert!(max_interior_turn(a) <= 30.0);
            for b in out.iter().skip(i + 1) {
                for (pa, ta) in [(a.points[0], -start_tangent(&a.points)), (a.points[a.points.len() - 1], end_tangent(&a.points))] {
                    for (pb, tb) in [(b.points[0], start_tangent(&b.points)), (b.points[b.points.len() - 1], -end_tangent(&b.points))] {
                        if pa.dist(pb) <= JOIN_TOL {
                            assert!(turn_angle_deg(ta, tb) > 30.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pruning() {
        let params = p();
        let short = seg((0.0, 0.0), (0.02, 0.0));
        let long = seg((5.0, 0.0), (6.0, 0.0));
        let out = prune_short_paths(vec![short, long.clone()], &params);
        assert_eq!(out, vec![long]);
    }

    #[test]
    fn short_piece_survives_when_joined() {
        let params = p();
        let joined = join_split_segments(vec![seg((0.0, 0.0), (0.02, 0.0)), seg((0.02, 0.0), (0.5, 0.0))], &params);
        let out = prune_short_paths(joined, &params);
        assert_eq!(out.len(), 1);
        assert!((out[0].length() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tiny_closed_contour_exempt_from_pruning() {
        let ring = Polyline {
            points: vec![Vec2::new(0.0, 0.0), Vec2::new(0.005, 0.0), Vec2::new(0.005, 0.005)],
            closed: true,
        };
        assert_eq!(prune_short_paths(vec![ring], &p()).len(), 1);
    }

    #[test]
    fn lead_in_out_on_segment() {
        let out = add_lead_in_out(&seg((0.0, 0.0), (1.0, 0.0)), &p());
        assert_eq!(out.points.len(), 4);
        assert!((out.points[0] - Vec2::new(-0.3, 0.0)).norm() < 1e-12);
        assert!((out.points[3] - Vec2::new(1.3, 0.0)).norm() < 1e-12);
        assert_eq!(out.drawing_points(), vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
    }

    #[test]
    fn zero_extension_is_identity() {
        let params = CompileParams { extension_len: 0.0, ..p() };
        let pl = seg((0.0, 0.0), (1.0, 0.0));
        let out = add_lead_in_out(&pl, &params);
        assert_eq!(out.points, pl.points);
        assert_eq!(out.lead_in_len, 0.0);
    }

    #[test]
    fn lead_out_follows_final_tangent() {
        // Quarter arc from (0,-1) to (1,0) counter-clockwise ends heading +v.
        let pts: Vec<Vec2> = (0..=16)
            .map(|k| {
                let a = -core::f64::consts::FRAC_PI_2 * (1.0 - k as f64 / 16.0);
                Vec2::new(a.cos(), a.sin())
            })
            .collect();
        let fd_tangent = (pts[16] - pts[15]).normalized();
        let out = add_lead_in_out(&Polyline::open(pts.clone()), &p());
        let n = out.points.len();
        let lead = out.points[n - 1] - out.points[n - 2];
        assert!((lead.norm() - 0.3).abs() < 1e-12);
        assert!((lead.normalized() - fd_tangent).norm() < 1e-12);
        assert!(lead.x.abs() < 0.3 * 0.1 && lead.y > 0.29);
    }
}
