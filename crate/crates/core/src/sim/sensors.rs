//! Synthetic camera spots and LiDAR scans rendered from ground truth.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{CameraModel, WallFrame};
use crate::lidar::{ray_to_wall, LidarSample, LidarScan};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{Vec2, Vec3};
use crate::vision::{MarkerLayout, Spot, SpotFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarSimConfig {
    /// Samples per revolution.
    pub samples: usize,
    pub max_range: f64,
    /// Range noise, m.
    pub sigma: f64,
    /// Share of returns replaced by clutter in front of the wall.
    pub outlier_fraction: f64,
}

impl Default for LidarSimConfig {
    fn default() -> Self {
        LidarSimConfig { samples: 360, max_range: 12.0, sigma: 0.01, outlier_fraction: 0.1 }
    }
}

/// One drone as the camera sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerView {
    pub layout: MarkerLayout,
    /// Body origin, wall coordinates.
    pub position: Vec3,
    pub yaw: f64,
    /// Markers hidden by scripted occlusion.
    pub hidden: [bool; 3],
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Projects every visible marker and perturbs the pixel coordinates with
/// Gaussian noise. Markers behind the camera or outside the image produce
/// no spot.
pub fn render_spots<R: Rng>(views: &[MarkerView], cam: &CameraModel, wall: &WallFrame, sigma_px: f64, rng: &mut R, t: f64) -> SpotFrame {
    let noise = gaussian(sigma_px);
    let mut spots = Vec::new();
    for v in views {
        for (k, m) in v.layout.markers(v.position, v.yaw).iter().enumerate() {
            if v.hidden[k] {
                continue;
            }
            let world = wall.to_world(*m);
            let Some(px) = cam.project_visible(world) else { continue };
            let px = match &noise {
                Some(n) => px + Vec2::new(n.sample(rng), n.sample(rng)),
                None => px,
            };
            let d = world.dist(cam.position);
            spots.push(Spot { px, intensity: 1.0 / (d * d) });
        }
    }
    SpotFrame { timestamp: t, spots }
}

/// One planar scan from a drone at wall distance `distance` with yaw `yaw`.
/// Rays that miss the wall within range return nothing.
pub fn render_scan<R: Rng>(distance: f64, yaw: f64, cfg: &LidarSimConfig, rng: &mut R, t: f64) -> LidarScan {
    let noise = gaussian(cfg.sigma);
    let mut samples = Vec::new();
    for k in 0..cfg.samples {
        let bearing = -core::f64::consts::PI + core::f64::consts::TAU * k as f64 / cfg.samples as f64;
        let Some(r) = ray_to_wall(bearing, distance, yaw, cfg.max_range) else { continue };
        let range = if cfg.outlier_fraction > 0.0 && rng.random_bool(cfg.outlier_fraction.min(1.0)) {
            rng.random_range(r.min(0.2)..=r)
        } else {
            match &noise {
                Some(n) => (r + n.sample(rng)).clamp(1e-3, cfg.max_range),
                None => r,
            }
        };
        samples.push(LidarSample { bearing, range });
    }
    LidarScan { timestamp: t, samples, max_range: cfg.max_range }
}

/// World-space center of a drone's markers, for audits.
pub fn body_world(wall: &WallFrame, position: Vec3) -> Vec3 {
    wall.to_world(position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Intrinsics;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        let intr = Intrinsics { focal_px: 1400.0, principal_point: Vec2::new(960.0, 540.0), image_size: (1920, 1080) };
        CameraModel::looking_at(intr, Vec3::new(1.0, 1.0, 6.0), Vec3::new(1.0, 1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)).unwrap()
    }

    fn view(p: Vec3) -> MarkerView {
        MarkerView { layout: MarkerLayout { drone_id: 1, pattern_angle_deg: 30.0, spacing: 0.1 }, position: p, yaw: 0.1, hidden: [false; 3] }
    }

    #[test]
    fn noiseless_middle_spot_is_body_projection() {
        let c = cam();
        let w = WallFrame::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Vec3::new(0.4, 1.7, 0.1);
        let f = render_spots(&[view(p)], &c, &w, 0.0, &mut rng, 0.0);
        assert_eq!(f.spots.len(), 3);
        let expect = c.project(p).unwrap();
        assert!(f.spots[1].px.dist(expect) < 1e-9);
    }

    #[test]
    fn pixel_noise_has_configured_sigma() {
        let c = cam();
        let w = WallFrame::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = Vec3::new(1.0, 1.0, 0.1);
        let clean = render_spots(&[view(p)], &c, &w, 0.0, &mut rng, 0.0);
        let mut sum2 = 0.0;
        let mut n = 0.0;
        for _ in 0..10_000 {
            let f = render_spots(&[view(p)], &c, &w, 0.5, &mut rng, 0.0);
            let d = f.spots[0].px - clean.spots[0].px;
            sum2 += d.x * d.x + d.y * d.y;
            n += 2.0;
        }
        let s = (sum2 / n).sqrt();
        assert!((s - 0.5).abs() < 0.05, "sigma {s}");
    }

    #[test]
    fn outside_frustum_gives_no_spots() {
        let c = cam();
        let w = WallFrame::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = render_spots(&[view(Vec3::new(30.0, 1.0, 0.1))], &c, &w, 0.0, &mut rng, 0.0);
        assert!(f.spots.is_empty());
        let behind = render_spots(&[view(Vec3::new(1.0, 1.0, 7.0))], &c, &w, 0.0, &mut rng, 0.0);
        assert!(behind.spots.is_empty());
    }

    #[test]
    fn hidden_markers_are_omitted() {
        let c = cam();
        let w = WallFrame::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut v = view(Vec3::new(1.0, 1.0, 0.1));
        v.hidden = [true, false, false];
        assert_eq!(render_spots(&[v], &c, &w, 0.0, &mut rng, 0.0).spots.len(), 2);
    }

    #[test]
    fn scan_covers_the_front_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = LidarSimConfig { sigma: 0.0, outlier_fraction: 0.0, ..LidarSimConfig::default() };
        let s = render_scan(0.1, 0.0, &cfg, &mut rng, 0.0);
        assert!(s.samples.len() > 170 && s.samples.len() < 181);
        let ahead = s.samples.iter().find(|x| x.bearing.abs() < 1e-12).unwrap();
        assert!((ahead.range - 0.1).abs() < 1e-12);
    }
}
