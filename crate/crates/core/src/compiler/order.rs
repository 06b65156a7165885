//! Bottom-to-top, travel-minimizing path ordering.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::PaintPath;
use crate::math::Vec2;
#[allow(unused_imports)]
use crate::math::Float;

pub fn band_index(v: f64, band_height: f64) -> i64 {
    (v / band_height + 1e-9).floor() as i64
}

/// Non-drawing hop length along a sequence of paths. When `start` is given
/// the approach from it to the first path is included.
pub fn travel_length(paths: &[PaintPath], start: Option<Vec2>) -> f64 {
    let approach = match (start, paths.first()) {
        (Some(s), Some(p)) => s.dist(p.start()),
        _ => 0.0,
    };
    approach + paths.windows(2).map(|w| w[0].end().dist(w[1].start())).sum::<f64>()
}

#[derive(Clone, Copy)]
struct Item {
    idx: usize,
    reversed: bool,
}

struct Ends<'a> {
    paths: &'a [PaintPath],
}

impl Ends<'_> {
    fn entry(&self, it: Item) -> Vec2 {
        let p = &self.paths[it.idx];
        if it.reversed { p.end() } else { p.start() }
    }

    fn exit(&self, it: Item) -> Vec2 {
        let p = &self.paths[it.idx];
        if it.reversed { p.start() } else { p.end() }
    }

    fn cost(&self, from: Vec2, seq: &[Item]) -> f64 {
        let mut cur = from;
        let mut total = 0.0;
        for &it in seq {
            total += cur.dist(self.entry(it));
            cur = self.exit(it);
        }
        total
    }
}

/// Groups paths into horizontal bands by their lowest point and visits the
/// bands bottom to top. Inside a band the sequence starts as a greedy
/// nearest-neighbour tour from the previous exit point (paths may be
/// reversed) and is then improved with 2-opt moves. The input order is kept
/// whenever it is band-monotone and at least as short.
pub fn order_paths(paths: Vec<PaintPath>, band_height: f64, start: Vec2) -> Vec<PaintPath> {
    if paths.is_empty() {
        return paths;
    }
    let ends = Ends { paths: &paths };
    let mut bands: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, p) in paths.iter().enumerate() {
        bands.entry(band_index(p.lowest_v(), band_height)).or_default().push(i);
    }

    let mut order: Vec<Item> = Vec::with_capacity(paths.len());
    let mut cur = start;
    for members in bands.values() {
        let mut seq = greedy(&ends, members, cur);
        loop {
            let before = ends.cost(cur, &seq);
            two_opt(&ends, cur, &mut seq);
            or_opt(&ends, cur, &mut seq);
            if ends.cost(cur, &seq) >= before - 1e-12 {
                break;
            }
        }
        let as_given: Vec<Item> = members.iter().map(|&idx| Item { idx, reversed: false }).collect();
        if ends.cost(cur, &as_given) <= ends.cost(cur, &seq) {
            seq = as_given;
        }
        cur = ends.exit(seq[seq.len() - 1]);
        order.extend(seq);
    }

    let input_monotone = paths
        .windows(2)
        .all(|w| band_index(w[0].lowest_v(), band_height) <= band_index(w[1].lowest_v(), band_height));
    let identity: Vec<Item> = (0..paths.len()).map(|idx| Item { idx, reversed: false }).collect();
    if input_monotone && ends.cost(start, &identity) <= ends.cost(start, &order) {
        return paths;
    }

    let mut slots: Vec<Option<PaintPath>> = paths.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|it| {
            let p = slots[it.idx].take().expect("each path appears once");
            if it.reversed { p.reversed() } else { p }
        })
        .collect()
}

fn greedy(ends: &Ends<'_>, members: &[usize], from: Vec2) -> Vec<Item> {
    let mut left: Vec<usize> = members.to_vec();
    let mut seq = Vec::with_capacity(left.len());
    let mut cur = from;
    while !left.is_empty() {
        let mut best = (f64::INFINITY, 0usize, false);
        for (k, &idx) in left.iter().enumerate() {
            for reversed in [false, true] {
                let d = cur.dist(ends.entry(Item { idx, reversed }));
                if d < best.0 - 1e-12 {
                    best = (d, k, reversed);
                }
            }
        }
        let idx = left.remove(best.1);
        let it = Item { idx, reversed: best.2 };
        cur = ends.exit(it);
        seq.push(it);
    }
    seq
}

/// Segment-reversal (with orientation flips) and single-path flips until no
/// move shortens the open tour.
fn two_opt(ends: &Ends<'_>, from: Vec2, seq: &mut [Item]) {
    let n = seq.len();
    if n < 2 {
        if n == 1 {
            let flipped = Item { reversed: !seq[0].reversed, ..seq[0] };
            if from.dist(ends.entry(flipped)) < from.dist(ends.entry(seq[0])) {
                seq[0] = flipped;
            }
        }
        return;
    }
    let mut best = ends.cost(from, seq);
    for _pass in 0..200 {
        let mut improved = false;
        for i in 0..n {
            for j in i..n {
                // reverse seq[i..=j] and flip each element
                seq[i..=j].reverse();
                for it in &mut seq[i..=j] {
                    it.reversed = !it.reversed;
                }
                let c = ends.cost(from, seq);
                if c < best - 1e-12 {
                    best = c;
                    improved = true;
                } else {
                    for it in &mut seq[i..=j] {
                        it.reversed = !it.reversed;
                    }
                    seq[i..=j].reverse();
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Moves runs of up to three paths to another position, optionally
/// reversed, while that shortens the tour.
fn or_opt(ends: &Ends<'_>, from: Vec2, seq: &mut Vec<Item>) {
    let n = seq.len();
    if n < 3 {
        return;
    }
    let mut best = ends.cost(from, seq);
    for _pass in 0..200 {
        let mut improved = false;
        for len in 1..=3.min(n - 1) {
            for i in 0..=n - len {
                for k in 0..=n - len {
                    if k == i {
                        continue;
                    }
                    for flip in [false, true] {
                        let mut cand = seq.clone();
                        let mut run: Vec<Item> = cand.drain(i..i + len).collect();
                        if flip {
                            run.reverse();
                            for it in &mut run {
                                it.reversed = !it.reversed;
                            }
                        }
                        cand.splice(k..k, run);
                        let c = ends.cost(from, &cand);
                        if c < best - 1e-12 {
                            best = c;
                            *seq = cand;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::PathKind;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(id: u32, a: (f64, f64), b: (f64, f64)) -> PaintPath {
        PaintPath {
            id,
            kind: PathKind::Outline,
            points: vec![Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)],
            lead_in_len: 0.0,
            lead_out_len: 0.0,
        }
    }

    #[test]
    fn bands_visited_bottom_to_top() {
        let paths = vec![
            path(1, (0.0, 2.5), (1.0, 2.5)),
            path(2, (0.0, 0.5), (1.0, 0.5)),
            path(3, (0.0, 1.5), (1.0, 1.5)),
        ];
        let out = order_paths(paths, 0.5, Vec2::ZERO);
        let ids: Vec<u32> = out.iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![2, 3, 1]);
    }

    #[test]
    fn nearest_path_chosen() {
        let paths = vec![
            path(1, (0.0, 0.1), (1.0, 0.1)),
            path(2, (3.0, 0.1), (4.0, 0.1)),
            path(3, (1.1, 0.1), (2.0, 0.1)),
        ];
        let out = order_paths(paths, 0.5, Vec2::ZERO);
        let ids: Vec<u32> = out.iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![1, 3, 2]);
    }

    #[test]
    fn reversal_used_when_shorter() {
        let paths = vec![path(1, (0.0, 0.0), (1.0, 0.0)), path(2, (0.0, 0.1), (1.0, 0.1))];
        let out = order_paths(paths, 0.5, Vec2::ZERO);
        assert_eq!(out[1].start(), Vec2::new(1.0, 0.1));
        assert!((travel_length(&out, Some(Vec2::ZERO)) - 0.1).abs() < 1e-12);
    }

    /// Exhaustive optimum over all orders and orientations.
    fn brute_force(paths: &[PaintPath], start: Vec2) -> f64 {
        fn rec(paths: &[PaintPath], used: &mut [bool], cur: Vec2, acc: f64, best: &mut f64) {
            if used.iter().all(|&u| u) {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            for i in 0..paths.len() {
                if used[i] {
                    continue;
                }
                used[i] = true;
                for (entry, exit) in [(paths[i].start(), paths[i].end()), (paths[i].end(), paths[i].start())] {
                    rec(paths, used, exit, acc + cur.dist(entry), best);
                }
                used[i] = false;
            }
        }
        let mut best = f64::INFINITY;
        rec(paths, &mut vec![false; paths.len()], start, 0.0, &mut best);
        best
    }

    #[test]
    fn random_band_within_bound_of_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let paths: Vec<PaintPath> = (0..8)
                .map(|i| {
                    let a = (rng.random_range(0.0..3.0), rng.random_range(0.0..0.45));
                    let b = (rng.random_range(0.0..3.0), rng.random_range(0.0..0.45));
                    path(i, a, b)
                })
                .collect();
            let identity = travel_length(&paths, Some(Vec2::ZERO));
            let optimum = brute_force(&paths, Vec2::ZERO);
            let out = order_paths(paths, 0.5, Vec2::ZERO);
            let got = travel_length(&out, Some(Vec2::ZERO));
            assert!(got <= identity + 1e-12);
            assert!(got <= 1.5 * optimum + 1e-12, "{got} vs optimum {optimum}");
        }
    }
}
