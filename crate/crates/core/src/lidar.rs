//! Wall line extraction from planar LiDAR scans and fusion with camera beams.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{intersect_beam_at_wall_distance, Beam, GeomError, WallFrame};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{Vec2, Vec3};
use crate::vision::fit_line;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSample {
    /// Body-frame bearing, radians, counter-clockwise from forward.
    pub bearing: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LidarScan {
    pub timestamp: f64,
    pub samples: Vec<LidarSample>,
    pub max_range: f64,
}

impl LidarScan {
    pub fn validate(&self) -> Result<(), LidarError> {
        if self.samples.iter().any(|s| !(s.range > 0.0 && s.range <= self.max_range)) {
            return Err(LidarError::InvalidScan("range outside (0, max_range]"));
        }
        if self.samples.windows(2).any(|w| !(w[1].bearing > w[0].bearing)) {
            return Err(LidarError::InvalidScan("bearings not strictly increasing"));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<Vec2> {
        self.samples
            .iter()
            .map(|s| Vec2::new(s.range * s.bearing.cos(), s.range * s.bearing.sin()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub iterations: u32,
    pub inlier_tol: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig { iterations: 200, inlier_tol: 0.03, min_inliers: 30, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFit {
    /// Heading relative to the wall normal; positive turns the nose toward +u.
    pub yaw: f64,
    /// Perpendicular distance from the body origin to the wall, meters.
    pub distance: f64,
    pub inlier_count: usize,
    pub sample_count: usize,
    pub rms_residual: f64,
}

impl WallFit {
    pub fn inlier_ratio(&self) -> f64 {
        if self.sample_count == 0 {
            0.0
        } else {
            self.inlier_count as f64 / self.sample_count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LidarError {
    #[error("invalid scan: {0}")]
    InvalidScan(&'static str),
    #[error("scan has {have} samples, at least {need} needed")]
    InsufficientSamples { have: usize, need: usize },
    #[error("no wall found (best consensus {best} inliers, {need} needed)")]
    NoWall { best: usize, need: usize },
}

/// Normal-form line `p . normal = dist` with `dist >= 0`.
#[derive(Clone, Copy)]
struct Line {
    normal: Vec2,
    dist: f64,
}

impl Line {
    fn through(a: Vec2, b: Vec2) -> Option<Line> {
        let d = b - a;
        if d.norm() < 1e-9 {
            return None;
        }
        Some(Line::oriented(d.perp().normalized(), a))
    }

    fn oriented(normal: Vec2, on: Vec2) -> Line {
        let dist = on.dot(normal);
        if dist < 0.0 {
            Line { normal: -normal, dist: -dist }
        } else {
            Line { normal, dist }
        }
    }

    fn residual(&self, p: Vec2) -> f64 {
        (p.dot(self.normal) - self.dist).abs()
    }
}

fn consensus(points: &[Vec2], line: &Line, tol: f64) -> Vec<usize> {
    (0..points.len()).filter(|&i| line.residual(points[i]) <= tol).collect()
}

/// Total-least-squares wall line over the given points.
pub fn tls_wall(points: &[Vec2]) -> (f64, f64, f64) {
    let (c, dir, rms) = fit_line(points);
    let line = Line::oriented(dir.perp(), c);
    (line.normal.y.atan2(line.normal.x), line.dist, rms)
}

/// Two-point RANSAC followed by a total-least-squares refinement over the
/// consensus set.
pub fn ransac_wall_fit(scan: &LidarScan, cfg: &RansacConfig) -> Result<WallFit, LidarError> {
    scan.validate()?;
    let n = scan.samples.len();
    let need = cfg.min_inliers.max(2);
    if n < need {
        return Err(LidarError::InsufficientSamples { have: n, need });
    }
    let pts = scan.points();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let Some(line) = Line::through(pts[i], pts[j]) else { continue };
        let inl = consensus(&pts, &line, cfg.inlier_tol);
        if inl.len() > best.len() {
            best = inl;
        }
    }
    if best.len() < need {
        return Err(LidarError::NoWall { best: best.len(), need });
    }
    // refine, then re-collect inliers against the refined line once
    let mut inl = best;
    let mut fit = refine(&pts, &inl);
    let again = consensus(&pts, &fit.0, cfg.inlier_tol);
    if again.len() >= need && again != inl {
        inl = again;
        fit = refine(&pts, &inl);
    }
    let (line, rms) = fit;
    let yaw = line.normal.y.atan2(line.normal.x);
    if yaw.abs() >= core::f64::consts::FRAC_PI_2 || !(line.dist > 0.0) {
        return Err(LidarError::NoWall { best: inl.len(), need });
    }
    Ok(WallFit { yaw, distance: line.dist, inlier_count: inl.len(), sample_count: n, rms_residual: rms })
}

fn refine(pts: &[Vec2], idx: &[usize]) -> (Line, f64) {
    let sel: Vec<Vec2> = idx.iter().map(|&i| pts[i]).collect();
    let (c, dir, rms) = fit_line(&sel);
    (Line::oriented(dir.perp(), c), rms)
}

/// Range along a body-frame bearing to a wall at `distance` with the given
/// yaw, or `None` if the ray misses it within `max_range`.
pub fn ray_to_wall(bearing: f64, distance: f64, yaw: f64, max_range: f64) -> Option<f64> {
    let c = (bearing - yaw).cos();
    if c <= 1e-9 {
        return None;
    }
    let r = distance / c;
    (r <= max_range).then_some(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkSource {
    Primary,
    Backup,
}

impl LinkSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkSource::Primary => "primary_link",
            LinkSource::Backup => "backup_link",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "primary_link" => Some(LinkSource::Primary),
            "backup_link" => Some(LinkSource::Backup),
            _ => None,
        }
    }
}

/// Fused localization output in wall coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavFix {
    pub drone_id: u32,
    pub timestamp: f64,
    /// `(u, v, n)` meters.
    pub position: Vec3,
    pub yaw: f64,
    pub source: LinkSource,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("fix unavailable: {0}")]
pub struct FixUnavailable(#[from] pub GeomError);

/// Places the drone where its camera beam crosses the plane at the
/// LiDAR-measured wall distance.
pub fn fuse(beam: &Beam, fit: &WallFit, wall: &WallFrame, drone_id: u32, t: f64) -> Result<NavFix, FixUnavailable> {
    let p = intersect_beam_at_wall_distance(beam, wall, fit.distance)?;
    let mut position = wall.to_wall(p);
    position.z = fit.distance;
    Ok(NavFix {
        drone_id,
        timestamp: t,
        position,
        yaw: fit.yaw,
        source: LinkSource::Primary,
        quality: fit.inlier_ratio(),
    })
}
