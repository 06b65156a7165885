//! Wall frame, pinhole camera and localization beams.
//!
//! All mission quantities live in wall coordinates `(u, v, n)`: `u` runs
//! horizontally along the wall, `v` points up and `n` is the distance out of
//! the wall into the flight volume. The camera pose is expressed in the same
//! world frame that the [`WallFrame`] is embedded in.

use crate::math::{Mat3, Vec2, Vec3};
#[allow(unused_imports)]
use crate::math::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeomError {
    #[error("pixel ({x:.3}, {y:.3}) outside the {width}x{height} image")]
    PixelOutOfBounds { x: f64, y: f64, width: u32, height: u32 },
    #[error("beam is parallel to the wall offset plane")]
    Parallel,
    #[error("offset plane lies behind the beam origin (t = {t:.6})")]
    BehindOrigin { t: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
}

/// Orthonormal wall coordinate frame embedded in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFrame {
    pub origin: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub n_axis: Vec3,
}

impl Default for WallFrame {
    fn default() -> Self {
        Self::standard()
    }
}

impl WallFrame {
    /// The frame whose world coordinates are the wall coordinates.
    pub const fn standard() -> Self {
        WallFrame {
            origin: Vec3::ZERO,
            u_axis: Vec3::new(1.0, 0.0, 0.0),
            v_axis: Vec3::new(0.0, 1.0, 0.0),
            n_axis: Vec3::new(0.0, 0.0, 1.0),
        }
    }

    /// Builds a frame from the horizontal and vertical wall directions; `n`
    /// is derived as `u x v`.
    pub fn new(origin: Vec3, u_axis: Vec3, v_axis: Vec3) -> Option<Self> {
        let u = u_axis.normalized();
        let v = v_axis.normalized();
        if u == Vec3::ZERO || v == Vec3::ZERO || u.dot(v).abs() > 1e-9 {
            return None;
        }
        Some(WallFrame { origin, u_axis: u, v_axis: v, n_axis: u.cross(v) })
    }

    /// World point to `(u, v, n)` wall coordinates.
    pub fn to_wall(&self, p: Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(self.u_axis), d.dot(self.v_axis), d.dot(self.n_axis))
    }

    /// `(u, v, n)` wall coordinates to a world point.
    pub fn to_world(&self, c: Vec3) -> Vec3 {
        self.origin + self.u_axis * c.x + self.v_axis * c.y + self.n_axis * c.z
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let unit = |a: Vec3| (a.norm() - 1.0).abs() <= tol;
        unit(self.u_axis)
            && unit(self.v_axis)
            && unit(self.n_axis)
            && self.u_axis.dot(self.v_axis).abs() <= tol
            && (self.u_axis.cross(self.v_axis) - self.n_axis).norm() <= tol
    }
}

/// Zero-distortion pinhole camera.
///
/// Camera axes follow the image convention: `x` right, `y` down, `z` along
/// the optical axis. `rotation` maps camera-frame vectors to the world frame,
/// so its columns are the camera axes expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_px: f64,
    pub principal_point: Vec2,
    pub position: Vec3,
    pub rotation: Mat3,
    pub image_size: (u32, u32),
}

/// Intrinsic parameters only; used by calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub focal_px: f64,
    pub principal_point: Vec2,
    pub image_size: (u32, u32),
}

impl CameraModel {
    pub fn new(intr: Intrinsics, position: Vec3, rotation: Mat3) -> Result<Self, GeomError> {
        let cam = CameraModel {
            focal_px: intr.focal_px,
            principal_point: intr.principal_point,
            position,
            rotation,
            image_size: intr.image_size,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `position` whose optical axis points at `target`, with image
    /// "up" aligned to the world `up` direction as far as possible.
    pub fn looking_at(intr: Intrinsics, position: Vec3, target: Vec3, up: Vec3) -> Result<Self, GeomError> {
        let z = (target - position).normalized();
        let up_perp = up - z * up.dot(z);
        if z == Vec3::ZERO || up_perp.norm() < 1e-9 {
            return Err(GeomError::InvalidCamera("degenerate look-at direction"));
        }
        let y = -up_perp.normalized();
        let x = y.cross(z);
        Self::new(intr, position, Mat3::from_cols(x, y, z))
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            focal_px: self.focal_px,
            principal_point: self.principal_point,
            image_size: self.image_size,
        }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.focal_px > 0.0) {
            return Err(GeomError::InvalidCamera("focal length must be positive"));
        }
        if !self.in_bounds(self.principal_point) {
            return Err(GeomError::InvalidCamera("principal point outside image"));
        }
        Ok(())
    }

    pub fn in_bounds(&self, px: Vec2) -> bool {
        let (w, h) = self.image_size;
        px.x >= 0.0 && px.y >= 0.0 && px.x <= w as f64 && px.y <= h as f64
    }

    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.col(2)
    }

    /// Projects a world point; `None` when it is not in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<Vec2> {
        let c = self.rotation.transpose().mul_vec(p - self.position);
        if c.z <= 1e-12 {
            return None;
        }
        Some(Vec2::new(
            self.principal_point.x + self.focal_px * c.x / c.z,
            self.principal_point.y + self.focal_px * c.y / c.z,
        ))
    }

    /// Projection that additionally requires the pixel to land on the sensor.
    pub fn project_visible(&self, p: Vec3) -> Option<Vec2> {
        self.project(p).filter(|px| self.in_bounds(*px))
    }
}

/// Half-line from the camera center through a detected pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Beam {
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Beam { origin, direction: direction.normalized() }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Perpendicular distance from `p` to the beam's supporting line.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let d = p - self.origin;
        (d - self.direction * d.dot(self.direction)).norm()
    }
}

pub fn beam_from_pixel(cam: &CameraModel, px: Vec2) -> Result<Beam, GeomError> {
    if !cam.in_bounds(px) {
        return Err(GeomError::PixelOutOfBounds {
            x: px.x,
            y: px.y,
            width: cam.image_size.0,
            height: cam.image_size.1,
        });
    }
    let ray = Vec3::new(
        (px.x - cam.principal_point.x) / cam.focal_px,
        (px.y - cam.principal_point.y) / cam.focal_px,
        1.0,
    );
    Ok(Beam::new(cam.position, cam.rotation.mul_vec(ray)))
}

/// Point where the beam crosses the plane lying `d` meters in front of the
/// wall. `t = 0` (origin already on the plane) is accepted.
pub fn intersect_beam_at_wall_distance(beam: &Beam, wall: &WallFrame, d: f64) -> Result<Vec3, GeomError> {
    let dir = beam.direction.normalized();
    let denom = dir.dot(wall.n_axis);
    if denom.abs() <= 1e-6 {
        return Err(GeomError::Parallel);
    }
    let origin_n = (beam.origin - wall.origin).dot(wall.n_axis);
    let t = (d - origin_n) / denom;
    if t < 0.0 {
        return Err(GeomError::BehindOrigin { t });
    }
    let mut p = beam.origin + dir * t;
    // Remove the rounding residue along the normal so the plane equation
    // holds to machine precision.
    let residual = (p - wall.origin).dot(wall.n_axis) - d;
    p -= wall.n_axis * residual;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> Intrinsics {
        Intrinsics { focal_px: 1000.0, principal_point: Vec2::new(640.0, 360.0), image_size: (1280, 720) }
    }

    fn identity_cam() -> CameraModel {
        CameraModel::new(intr(), Vec3::new(0.0, 0.0, 0.0), Mat3::IDENTITY).unwrap()
    }

    fn facing_wall() -> CameraModel {
        CameraModel::looking_at(intr(), Vec3::new(2.0, 1.5, 8.0), Vec3::new(2.0, 1.5, 0.0), Vec3::new(0.0, 1.0, 0.0))
            .unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let cam = facing_wall();
        let b = beam_from_pixel(&cam, cam.principal_point).unwrap();
        assert!((b.direction - cam.optical_axis()).norm() < 1e-12);
        assert!((b.direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn pixel_offset_direction() {
        // (0.2, 0, 2) projects to (640 + 1000 * 0.1, 360) = (740, 360).
        let cam = identity_cam();
        let fwd = cam.project(Vec3::new(0.2, 0.0, 2.0)).unwrap();
        assert!((fwd - Vec2::new(740.0, 360.0)).norm() < 1e-12);
        let b = beam_from_pixel(&cam, Vec2::new(740.0, 360.0)).unwrap();
        let expect = Vec3::new(0.1, 0.0, 1.0).normalized();
        assert!((b.direction - expect).norm() < 1e-12);
    }

    #[test]
    fn mirrored_pixels_give_mirrored_beams() {
        let cam = identity_cam();
        let a = beam_from_pixel(&cam, Vec2::new(700.0, 400.0)).unwrap();
        let b = beam_from_pixel(&cam, Vec2::new(580.0, 320.0)).unwrap();
        assert!((a.direction.x + b.direction.x).abs() < 1e-12);
        assert!((a.direction.y + b.direction.y).abs() < 1e-12);
        assert!((a.direction.z - b.direction.z).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_pixel_rejected() {
        let cam = identity_cam();
        assert!(matches!(
            beam_from_pixel(&cam, Vec2::new(-1.0, 10.0)),
            Err(GeomError::PixelOutOfBounds { .. })
        ));
        assert!(beam_from_pixel(&cam, Vec2::new(1280.5, 10.0)).is_err());
    }

    #[test]
    fn axis_aligned_intersection() {
        let wall = WallFrame::standard();
        let beam = Beam::new(Vec3::new(1.0, 2.0, 10.0), Vec3::new(0.0, 0.0, -1.0));
        let p = intersect_beam_at_wall_distance(&beam, &wall, 2.0).unwrap();
        assert_eq!(p, Vec3::new(1.0, 2.0, 2.0));
    }

    #[test]
    fn degenerate_zero_t_returns_origin() {
        let wall = WallFrame::standard();
        let beam = Beam::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.3, 0.1, -1.0));
        let p = intersect_beam_at_wall_distance(&beam, &wall, 3.0).unwrap();
        assert!((p - beam.origin).norm() < 1e-15);
    }

    #[test]
    fn oblique_intersection_satisfies_both_equations() {
        let wall = WallFrame::new(
            Vec3::new(0.5, -0.2, 0.1),
            Vec3::new(1.0, 0.0, 0.2),
            Vec3::new(-0.2 * 0.0, 1.0, 0.0),
        )
        .unwrap();
        let beam = Beam::new(Vec3::new(3.0, 2.0, 9.0), Vec3::new(-0.3, -0.1, -1.0));
        let d = 1.5;
        let p = intersect_beam_at_wall_distance(&beam, &wall, d).unwrap();
        // Independent solve: t from the plane equation written out by hand.
        let n = wall.n_axis;
        let t = (d + wall.origin.dot(n) - beam.origin.dot(n)) / beam.direction.dot(n);
        let q = beam.at(t);
        assert!((p - q).norm() < 1e-9);
        assert!(((p - wall.origin).dot(n) - d).abs() < 1e-9);
        assert!(beam.distance_to(p) < 1e-9);
    }

    #[test]
    fn parallel_and_behind_rejected() {
        let wall = WallFrame::standard();
        let parallel = Beam::new(Vec3::new(0.0, 0.0, 5.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(intersect_beam_at_wall_distance(&parallel, &wall, 1.0), Err(GeomError::Parallel));
        let toward = Beam::new(Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            intersect_beam_at_wall_distance(&toward, &wall, 6.0),
            Err(GeomError::BehindOrigin { .. })
        ));
    }

    #[test]
    fn wall_frame_invariants() {
        let w = WallFrame::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.0), Vec3::new(-1.0, 1.0, 0.0)).unwrap();
        assert!(w.is_orthonormal(1e-9));
        let c = Vec3::new(0.3, -2.0, 4.0);
        assert!((w.to_wall(w.to_world(c)) - c).norm() < 1e-12);
        assert!(WallFrame::standard().is_orthonormal(1e-12));
    }

    proptest! {
        #[test]
        fn beam_reprojects_to_pixel(px in 0.0f64..1280.0, py in 0.0f64..720.0, depth in 0.1f64..50.0) {
            let cam = facing_wall();
            let b = beam_from_pixel(&cam, Vec2::new(px, py)).unwrap();
            let p = b.at(depth);
            let back = cam.project(p).unwrap();
            prop_assert!((back - Vec2::new(px, py)).norm() < 1e-6);
        }

        #[test]
        fn intersection_ignores_direction_scale(scale in 0.01f64..100.0, dx in -0.5f64..0.5, dy in -0.5f64..0.5) {
            let wall = WallFrame::standard();
            let dir = Vec3::new(dx, dy, -1.0);
            let a = Beam { origin: Vec3::new(1.0, 1.0, 8.0), direction: dir.normalized() };
            let b = Beam { origin: a.origin, direction: (dir * scale).normalized() };
            let pa = intersect_beam_at_wall_distance(&a, &wall, 0.4).unwrap();
            let pb = intersect_beam_at_wall_distance(&b, &wall, 0.4).unwrap();
            prop_assert!((pa - pb).norm() < 1e-9);
        }
    }
}
