//! IR marker tracking: spot grouping, identification by line angle, partial
//! visibility recovery inside per-drone areas of interest, and beam output.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geom::{beam_from_pixel, Beam, CameraModel};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{Vec2, Vec3};

pub mod calibrate;

pub use calibrate::{calibrate_camera, CalibError, Calibration};

/// Marker pattern carried on the back of one drone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerLayout {
    pub drone_id: u32,
    /// Angle of the marker line in degrees, `[0, 180)`, measured in the
    /// drone's back plane (and in the image with `y` pointing up).
    pub pattern_angle_deg: f64,
    /// Distance between adjacent markers, meters.
    pub spacing: f64,
}

impl MarkerLayout {
    /// Wall-frame marker positions of a drone whose body origin is `body`
    /// and whose yaw is `yaw`. The markers lie in the back plane, spanned by
    /// the body's right axis `(cos yaw, 0, sin yaw)` and the wall's `v`.
    pub fn markers(&self, body: Vec3, yaw: f64) -> [Vec3; 3] {
        let a = self.pattern_angle_deg.to_radians();
        let right = Vec3::new(yaw.cos(), 0.0, yaw.sin());
        let d = (right * a.cos() + Vec3::new(0.0, 1.0, 0.0) * a.sin()) * self.spacing;
        [body - d, body, body + d]
    }

    /// Checks the layout set: positive spacing, angles in range, unique ids
    /// and pairwise angle separation of at least twice the tolerance.
    pub fn validate_set(layouts: &[MarkerLayout], angle_tolerance_deg: f64) -> Result<(), &'static str> {
        for (i, a) in layouts.iter().enumerate() {
            if !(a.spacing > 0.0) {
                return Err("marker spacing must be positive");
            }
            if !(0.0..180.0).contains(&a.pattern_angle_deg) {
                return Err("pattern angle must lie in [0, 180)");
            }
            for b in &layouts[i + 1..] {
                if a.drone_id == b.drone_id {
                    return Err("duplicate drone id in marker layouts");
                }
                if angle_dist_deg(a.pattern_angle_deg, b.pattern_angle_deg) < 2.0 * angle_tolerance_deg {
                    return Err("pattern angles closer than twice the tolerance");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spot {
    pub px: Vec2,
    pub intensity: f64,
}

impl Spot {
    pub fn new(x: f64, y: f64, intensity: f64) -> Self {
        Spot { px: Vec2::new(x, y), intensity }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpotFrame {
    pub timestamp: f64,
    pub spots: Vec<Spot>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grouping {
    pub groups: Vec<[Spot; 3]>,
    pub partial: Vec<Spot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub proximity_px: f64,
    pub angle_tolerance_deg: f64,
    /// Frames without a full sighting before a drone is dropped.
    pub max_staleness: u32,
    /// Relative tolerance when matching spot separations to the projected
    /// marker spacing.
    pub spacing_tol: f64,
    /// Spots dimmer than this are ignored.
    pub min_intensity: f64,
    pub aoi_size: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            proximity_px: 80.0,
            angle_tolerance_deg: 15.0,
            max_staleness: 30,
            spacing_tol: 0.3,
            min_intensity: 0.0,
            aoi_size: 200.0,
        }
    }
}

/// Axis-aligned pixel box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aoi {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Aoi {
    /// Box of side `size` centered on `c`, shifted (not shrunk) to stay
    /// inside the image when possible.
    pub fn around(c: Vec2, size: f64, image: (u32, u32)) -> Aoi {
        let fit = |c: f64, lim: f64| {
            if lim <= size {
                (0.0, lim)
            } else {
                let lo = (c - size / 2.0).clamp(0.0, lim - size);
                (lo, lo + size)
            }
        };
        let (x0, x1) = fit(c.x, image.0 as f64);
        let (y0, y1) = fit(c.y, image.1 as f64);
        Aoi { x0, y0, x1, y1 }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneTrack {
    pub center: Vec2,
    pub aoi: Aoi,
    pub visible_count: u8,
    /// Frames since the last full three-marker sighting.
    pub staleness: u32,
    /// Adjacent-marker distance in pixels at the last full sighting.
    pub spacing_px: f64,
    /// Unit marker-line direction in pixels at the last full sighting.
    pub direction: Vec2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackState {
    pub tracks: BTreeMap<u32, DroneTrack>,
    pub frames: u64,
    /// Full groups that matched no layout.
    pub unknown_groups: u64,
    /// Partial spots that fell inside more than one area of interest.
    pub ambiguous_spots: u64,
    /// Drones dropped after exceeding the staleness limit.
    pub lost_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedBeam {
    pub drone_id: u32,
    pub center: Vec2,
    pub beam: Beam,
    /// Number of markers the estimate was built from.
    pub visible: u8,
}

fn fold180(a: f64) -> f64 {
    let r = a % 180.0;
    if r < 0.0 {
        r + 180.0
    } else {
        r
    }
}

pub(crate) fn angle_dist_deg(a: f64, b: f64) -> f64 {
    let d = fold180(a - b);
    d.min(180.0 - d)
}

/// Greedy brightest-first grouping into marker triplets.
pub fn detect_and_group(frame: &SpotFrame, proximity_px: f64) -> Grouping {
    let mut spots: Vec<Spot> = frame.spots.clone();
    spots.sort_by(|a, b| b.intensity.total_cmp(&a.intensity));
    let mut used = alloc::vec![false; spots.len()];
    let mut out = Grouping::default();
    for i in 0..spots.len() {
        if used[i] {
            continue;
        }
        let mut near: Vec<(f64, usize)> = (0..spots.len())
            .filter(|&j| j != i && !used[j])
            .map(|j| (spots[i].px.dist(spots[j].px), j))
            .filter(|(d, _)| *d <= proximity_px)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        used[i] = true;
        if near.len() >= 2 {
            let (j, k) = (near[0].1, near[1].1);
            used[j] = true;
            used[k] = true;
            out.groups.push([spots[i], spots[j], spots[k]]);
        } else {
            out.partial.push(spots[i]);
        }
    }
    out
}

/// Total-least-squares line through the points: (centroid, unit direction,
/// rms perpendicular residual).
pub fn fit_line(points: &[Vec2]) -> (Vec2, Vec2, f64) {
    let n = points.len() as f64;
    let c = points.iter().fold(Vec2::ZERO, |a, p| a + *p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = Vec2::new(theta.cos(), theta.sin());
    let normal = dir.perp();
    let rms = (points.iter().map(|p| (*p - c).dot(normal).powi(2)).sum::<f64>() / n).sqrt();
    (c, dir, rms)
}

/// Image of the middle marker: the middle spot moved onto the fitted line.
/// Perspective keeps the three images collinear but not equally spaced, so
/// the middle spot (not the mean) is the body origin.
pub fn triplet_center(pts: &[Vec2; 3]) -> (Vec2, Vec2, f64) {
    let (c, dir, rms) = fit_line(pts);
    let mut along = [0usize, 1, 2];
    along.sort_by(|&a, &b| (pts[a] - c).dot(dir).total_cmp(&(pts[b] - c).dot(dir)));
    let mid = pts[along[1]];
    (c + dir * (mid - c).dot(dir), dir, rms)
}

/// Line angle of a pixel direction in degrees, `y` up, folded to `[0, 180)`.
pub fn image_angle_deg(dir: Vec2) -> f64 {
    let a = fold180((-dir.y).atan2(dir.x).to_degrees());
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// Matches a triplet to the layout with the closest pattern angle.
pub fn identify(group: &[Spot; 3], layouts: &[MarkerLayout], angle_tolerance_deg: f64) -> Option<(u32, Vec2)> {
    let pts = [group[0].px, group[1].px, group[2].px];
    let (center, dir, _) = triplet_center(&pts);
    let angle = image_angle_deg(dir);
    layouts
        .iter()
        .map(|l| (angle_dist_deg(angle, l.pattern_angle_deg), l.drone_id))
        .filter(|(d, _)| *d <= angle_tolerance_deg)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, id)| (id, center))
}

/// Whether three points look like one marker bar: collinear with equal gaps.
fn triplet_shape_ok(pts: &[Vec2; 3], spacing_tol: f64) -> Option<(f64, Vec2)> {
    let (c, dir, rms) = fit_line(pts);
    let mut t: [f64; 3] = [0.0; 3];
    for (k, p) in pts.iter().enumerate() {
        t[k] = (*p - c).dot(dir);
    }
    t.sort_by(f64::total_cmp);
    let (g1, g2) = (t[1] - t[0], t[2] - t[1]);
    let mean = 0.5 * (g1 + g2);
    if mean <= 0.0 || (g1 - g2).abs() > spacing_tol * mean || rms > 0.2 * mean {
        return None;
    }
    Some((mean, dir))
}

/// Every center position consistent with the visible spots occupying
/// distinct slots of a three-marker bar with the given pixel spacing.
pub fn partial_candidates(spots: &[Vec2], spacing_px: f64, direction: Vec2, spacing_tol: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    match spots {
        [a] => {
            let d = direction.normalized() * spacing_px;
            out.push(*a);
            out.push(*a + d);
            out.push(*a - d);
        }
        [a, b] => {
            let sep = a.dist(*b);
            for i in [-1i32, 0, 1] {
                for j in [-1i32, 0, 1] {
                    let k = j - i;
                    if k == 0 {
                        continue;
                    }
                    let expect = k.unsigned_abs() as f64 * spacing_px;
                    if (sep - expect).abs() > spacing_tol * expect {
                        continue;
                    }
                    let c = *a - (*b - *a) * (i as f64 / k as f64);
                    if !out.iter().any(|q: &Vec2| q.dist(c) < 1e-9) {
                        out.push(c);
                    }
                }
            }
        }
        _ => {}
    }
    out
}

/// Center estimate from one or two visible markers: the layout-consistent
/// candidate nearest the previous center.
pub fn estimate_center_partial(spots: &[Vec2], track: &DroneTrack, cfg: &TrackerConfig) -> Option<Vec2> {
    if track.staleness > cfg.max_staleness || spots.is_empty() || spots.len() > 2 {
        return None;
    }
    let mut cands = partial_candidates(spots, track.spacing_px, track.direction, cfg.spacing_tol);
    if cands.is_empty() {
        // two spots that do not fit the bar: fall back to the closer one
        let nearest = spots
            .iter()
            .min_by(|a, b| a.dist(track.center).total_cmp(&b.dist(track.center)))
            .copied()?;
        cands = partial_candidates(&[nearest], track.spacing_px, track.direction, cfg.spacing_tol);
    }
    cands.into_iter().min_by(|a, b| a.dist(track.center).total_cmp(&b.dist(track.center)))
}

/// Processes one frame: identifies full triplets, recovers partially
/// visible drones inside their areas of interest and emits one beam per
/// located drone (sorted by drone id).
pub fn track_frame(
    frame: &SpotFrame,
    layouts: &[MarkerLayout],
    state: &mut TrackState,
    cam: &CameraModel,
    cfg: &TrackerConfig,
) -> Vec<TrackedBeam> {
    state.frames += 1;
    let visible = SpotFrame {
        timestamp: frame.timestamp,
        spots: frame
            .spots
            .iter()
            .filter(|s| s.intensity >= cfg.min_intensity && cam.in_bounds(s.px))
            .copied()
            .collect(),
    };
    let grouping = detect_and_group(&visible, cfg.proximity_px);
    let mut pool: Vec<Vec2> = grouping.partial.iter().map(|s| s.px).collect();

    // full sightings; a drone claimed twice keeps the group nearest its track
    let mut full: BTreeMap<u32, (Vec2, f64, Vec2)> = BTreeMap::new();
    let mut claimed: BTreeMap<u32, [Vec2; 3]> = BTreeMap::new();
    for g in &grouping.groups {
        let pts = [g[0].px, g[1].px, g[2].px];
        let shape = triplet_shape_ok(&pts, cfg.spacing_tol);
        let id = shape.and_then(|_| identify(g, layouts, cfg.angle_tolerance_deg));
        // a tracked drone must reappear inside its aoi at a similar scale
        let id = id.filter(|(id, center)| match (state.tracks.get(id), shape) {
            (Some(t), Some((spacing, _))) => {
                t.aoi.contains(*center) && (spacing - t.spacing_px).abs() <= cfg.spacing_tol * t.spacing_px
            }
            _ => true,
        });
        match (shape, id) {
            (Some((spacing, dir)), Some((id, center))) => {
                let better = match (full.get(&id), state.tracks.get(&id)) {
                    (None, _) => true,
                    (Some(old), Some(t)) => center.dist(t.center) < old.0.dist(t.center),
                    (Some(_), None) => false,
                };
                if better {
                    full.insert(id, (center, spacing, dir));
                    if let Some(prev) = claimed.insert(id, pts) {
                        pool.extend_from_slice(&prev);
                    }
                } else {
                    pool.extend_from_slice(&pts);
                }
            }
            _ => {
                if shape.is_some() {
                    state.unknown_groups += 1;
                }
                pool.extend_from_slice(&pts);
            }
        }
    }

    // drones tracked but not fully sighted: look for a consistent triplet
    // among loose spots inside their aoi before falling back to partials
    let missing: Vec<u32> = state.tracks.keys().copied().filter(|id| !full.contains_key(id)).collect();
    for id in &missing {
        let (track, layout) = match (state.tracks.get(id), layouts.iter().find(|l| l.drone_id == *id)) {
            (Some(t), Some(l)) => (*t, *l),
            _ => continue,
        };
        let inside: Vec<usize> = (0..pool.len()).filter(|&i| track.aoi.contains(pool[i])).collect();
        let mut best: Option<(f64, [usize; 3], f64, Vec2, Vec2)> = None;
        for a in 0..inside.len() {
            for b in a + 1..inside.len() {
                for c in b + 1..inside.len() {
                    let idx = [inside[a], inside[b], inside[c]];
                    let pts = [pool[idx[0]], pool[idx[1]], pool[idx[2]]];
                    let Some((spacing, dir)) = triplet_shape_ok(&pts, cfg.spacing_tol) else { continue };
                    if angle_dist_deg(image_angle_deg(dir), layout.pattern_angle_deg) > cfg.angle_tolerance_deg
                        || (spacing - track.spacing_px).abs() > cfg.spacing_tol * track.spacing_px
                    {
                        continue;
                    }
                    let center = triplet_center(&pts).0;
                    let score = center.dist(track.center);
                    if best.as_ref().is_none_or(|b| score < b.0) {
                        best = Some((score, idx, spacing, dir, center));
                    }
                }
            }
        }
        if let Some((_, idx, spacing, dir, center)) = best {
            full.insert(*id, (center, spacing, dir));
            let mut idx = idx;
            idx.sort_unstable();
            for i in idx.iter().rev() {
                pool.remove(*i);
            }
        }
    }

    // assign remaining loose spots to the nearest previous center whose aoi
    // contains them
    let mut partial: BTreeMap<u32, Vec<Vec2>> = BTreeMap::new();
    for p in &pool {
        let owners: Vec<(u32, f64)> = state
            .tracks
            .iter()
            .filter(|(id, t)| !full.contains_key(id) && t.aoi.contains(*p))
            .map(|(id, t)| (*id, t.center.dist(*p)))
            .collect();
        if owners.len() > 1 {
            state.ambiguous_spots += 1;
        }
        if let Some((id, _)) = owners.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
            partial.entry(id).or_default().push(*p);
        }
    }

    let mut out = Vec::new();
    let aoi_size = cfg.aoi_size;
    let image = cam.image_size;
    let mut next: BTreeMap<u32, DroneTrack> = BTreeMap::new();
    for (id, (center, spacing, dir)) in &full {
        let track = DroneTrack {
            center: *center,
            aoi: Aoi::around(*center, aoi_size, image),
            visible_count: 3,
            staleness: 0,
            spacing_px: *spacing,
            direction: *dir,
        };
        next.insert(*id, track);
        if let Ok(beam) = beam_from_pixel(cam, *center) {
            out.push(TrackedBeam { drone_id: *id, center: *center, beam, visible: 3 });
        }
    }
    for (id, track) in &state.tracks {
        if full.contains_key(id) {
            continue;
        }
        let staleness = track.staleness + 1;
        if staleness > cfg.max_staleness {
            state.lost_events += 1;
            continue;
        }
        let mut t = DroneTrack { staleness, visible_count: 0, ..*track };
        if let Some(spots) = partial.get(id) {
            let spots: Vec<Vec2> = if spots.len() > 2 {
                // keep the two closest to the previous center
                let mut s = spots.clone();
                s.sort_by(|a, b| a.dist(track.center).total_cmp(&b.dist(track.center)));
                s.truncate(2);
                s
            } else {
                spots.clone()
            };
            if let Some(c) = estimate_center_partial(&spots, &t, cfg) {
                t.center = c;
                t.aoi = Aoi::around(c, aoi_size, image);
                t.visible_count = spots.len() as u8;
                if let Ok(beam) = beam_from_pixel(cam, c) {
                    out.push(TrackedBeam { drone_id: *id, center: c, beam, visible: t.visible_count });
                }
            }
        }
        next.insert(*id, t);
    }
    state.tracks = next;
    out.sort_by_key(|b| b.drone_id);
    out
}
