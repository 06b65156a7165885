//! Camera extrinsics from four wall markers.

use crate::geom::{CameraModel, GeomError, Intrinsics, WallFrame};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{solve_linear, Mat3, Vec2, Vec3};

const MAX_ITERATIONS: u32 = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibError {
    #[error("degenerate marker configuration: {0}")]
    Degenerate(&'static str),
    #[error("pose refinement did not converge after {iterations} iterations (rms {rms_px:.4} px)")]
    NotConverged { iterations: u32, rms_px: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub camera: CameraModel,
    pub rms_px: f64,
    pub max_px: f64,
    pub iterations: u32,
}

/// Pose in wall coordinates: camera-to-wall rotation and camera center.
#[derive(Clone, Copy)]
struct Pose {
    rot: Mat3,
    center: Vec3,
}

impl Pose {
    fn project(&self, intr: &Intrinsics, p: Vec3) -> Option<Vec2> {
        let c = self.rot.transpose().mul_vec(p - self.center);
        if c.z <= 1e-12 {
            return None;
        }
        Some(Vec2::new(
            intr.principal_point.x + intr.focal_px * c.x / c.z,
            intr.principal_point.y + intr.focal_px * c.y / c.z,
        ))
    }

    fn perturbed(&self, d: &[f64; 6]) -> Pose {
        Pose {
            rot: Mat3::exp(Vec3::new(d[0], d[1], d[2])).mul_mat(&self.rot),
            center: self.center + Vec3::new(d[3], d[4], d[5]),
        }
    }

    /// Stacked pixel residuals; `None` if a marker ends up behind the camera.
    fn residuals(&self, intr: &Intrinsics, px: &[Vec2; 4], pts: &[Vec3; 4]) -> Option<[f64; 8]> {
        let mut r = [0.0; 8];
        for i in 0..4 {
            let q = self.project(intr, pts[i])? - px[i];
            r[2 * i] = q.x;
            r[2 * i + 1] = q.y;
        }
        Some(r)
    }
}

fn cost(r: &[f64; 8]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Recovers the camera pose from four coplanar wall markers with known wall
/// coordinates and their detected pixel positions.
///
/// A homography from the wall plane to normalized image coordinates gives
/// the initial pose, which is then refined with Levenberg-Marquardt on the
/// pixel reprojection error.
pub fn calibrate_camera(
    marker_px: &[Vec2; 4],
    marker_wall: &[Vec3; 4],
    intr: Intrinsics,
    wall: &WallFrame,
) -> Result<Calibration, CalibError> {
    if !(intr.focal_px > 0.0) {
        return Err(GeomError::InvalidCamera("focal length must be positive").into());
    }
    let scale = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| marker_wall[i].dist(marker_wall[j]))
        .fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(CalibError::Degenerate("markers coincide"));
    }
    let n0 = marker_wall.iter().map(|p| p.z).sum::<f64>() / 4.0;
    if marker_wall.iter().any(|p| (p.z - n0).abs() > 1e-6 * scale.max(1.0)) {
        return Err(CalibError::Degenerate("markers are not coplanar with the wall"));
    }
    let px_scale = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| marker_px[i].dist(marker_px[j]))
        .fold(0.0, f64::max);
    for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let w = (marker_wall[b].xy() - marker_wall[a].xy()).cross(marker_wall[c].xy() - marker_wall[a].xy());
        let p = (marker_px[b] - marker_px[a]).cross(marker_px[c] - marker_px[a]);
        if w.abs() <= 1e-6 * scale * scale || p.abs() <= 1e-6 * px_scale * px_scale {
            return Err(CalibError::Degenerate("three markers are collinear"));
        }
    }

    let initial = homography_pose(marker_px, marker_wall, &intr, n0)?;
    let (pose, iterations, rms) = refine(initial, marker_px, marker_wall, &intr)?;

    let w = Mat3::from_cols(wall.u_axis, wall.v_axis, wall.n_axis);
    let camera = CameraModel::new(intr, wall.to_world(pose.center), w.mul_mat(&pose.rot))?;
    let max_px = (0..4)
        .map(|i| pose.project(&intr, marker_wall[i]).map_or(f64::INFINITY, |q| q.dist(marker_px[i])))
        .fold(0.0, f64::max);
    Ok(Calibration { camera, rms_px: rms, max_px, iterations })
}

fn homography_pose(px: &[Vec2; 4], pts: &[Vec3; 4], intr: &Intrinsics, n0: f64) -> Result<Pose, CalibError> {
    let mean = pts.iter().fold(Vec3::ZERO, |a, p| a + *p) / 4.0;
    let mut a = [0.0; 64];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let (u, v) = (pts[i].x - mean.x, pts[i].y - mean.y);
        let x = (px[i].x - intr.principal_point.x) / intr.focal_px;
        let y = (px[i].y - intr.principal_point.y) / intr.focal_px;
        let r0 = 2 * i * 8;
        a[r0..r0 + 8].copy_from_slice(&[u, v, 1.0, 0.0, 0.0, 0.0, -x * u, -x * v]);
        b[2 * i] = x;
        let r1 = (2 * i + 1) * 8;
        a[r1..r1 + 8].copy_from_slice(&[0.0, 0.0, 0.0, u, v, 1.0, -y * u, -y * v]);
        b[2 * i + 1] = y;
    }
    solve_linear(&mut a, &mut b, 8).ok_or(CalibError::Degenerate("singular homography system"))?;
    let h1 = Vec3::new(b[0], b[3], b[6]);
    let h2 = Vec3::new(b[1], b[4], b[7]);
    let h3 = Vec3::new(b[2], b[5], 1.0);
    // the marker centroid maps to h3, which has positive depth, so lambda > 0
    let lambda = 2.0 / (h1.norm() + h2.norm());
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let wall_to_cam = Mat3::from_cols(r1, r2, r1.cross(r2))
        .orthonormalized()
        .ok_or(CalibError::Degenerate("homography does not decompose into a rotation"))?;
    let t = h3 * lambda;
    let rot = wall_to_cam.transpose();
    let centroid = Vec3::new(mean.x, mean.y, n0);
    Ok(Pose { rot, center: centroid - rot.mul_vec(t) })
}

fn refine(
    mut pose: Pose,
    px: &[Vec2; 4],
    pts: &[Vec3; 4],
    intr: &Intrinsics,
) -> Result<(Pose, u32, f64), CalibError> {
    let rms_of = |c: f64| (c / 4.0).sqrt();
    let mut r = pose
        .residuals(intr, px, pts)
        .ok_or(CalibError::Degenerate("initial pose puts markers behind the camera"))?;
    let mut c = cost(&r);
    let mut mu = 1e-3;
    const H: f64 = 1e-7;
    for it in 0..MAX_ITERATIONS {
        if c < 1e-24 {
            return Ok((pose, it, rms_of(c)));
        }
        // central-difference Jacobian, 8 x 6
        let mut jac = [[0.0; 6]; 8];
        for k in 0..6 {
            let mut d = [0.0; 6];
            d[k] = H;
            let rp = pose.perturbed(&d).residuals(intr, px, pts);
            d[k] = -H;
            let rm = pose.perturbed(&d).residuals(intr, px, pts);
            let (Some(rp), Some(rm)) = (rp, rm) else {
                return Err(CalibError::Degenerate("markers cross behind the camera during refinement"));
            };
            for i in 0..8 {
                jac[i][k] = (rp[i] - rm[i]) / (2.0 * H);
            }
        }
        let mut jtj = [[0.0; 6]; 6];
        let mut jtr = [0.0; 6];
        for i in 0..8 {
            for a in 0..6 {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..6 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        while mu < 1e16 {
            let mut m = [0.0; 36];
            let mut rhs = [0.0; 6];
            for a in 0..6 {
                for b in 0..6 {
                    m[a * 6 + b] = jtj[a][b];
                }
                m[a * 6 + a] += mu * jtj[a][a].max(1e-12);
                rhs[a] = -jtr[a];
            }
            if solve_linear(&mut m, &mut rhs, 6).is_none() {
                mu *= 4.0;
                continue;
            }
            let cand = pose.perturbed(&rhs);
            if let Some(rc) = cand.residuals(intr, px, pts) {
                let cc = cost(&rc);
                if cc < c {
                    let step = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let rel = (c - cc) / c.max(1e-300);
                    pose = cand;
                    r = rc;
                    c = cc;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    if step < 1e-13 || rel < 1e-14 {
                        return Ok((pose, it + 1, rms_of(c)));
                    }
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved {
            // no descent direction left: stationary point
            return Ok((pose, it + 1, rms_of(c)));
        }
    }
    Err(CalibError::NotConverged { iterations: MAX_ITERATIONS, rms_px: rms_of(c) })
}
