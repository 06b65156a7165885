//! Path projection, the two-regime tracking controller and spray timing.

use alloc::vec::Vec;

use crate::compiler::PaintPath;
use crate::lidar::NavFix;
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{Vec2, Vec3};

/// Half-width of the arc window searched around the hint, meters.
pub const PROJECTION_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub v_draw: f64,
    pub v_travel: f64,
    pub kp_n: f64,
    pub kd_n: f64,
    pub kp_w: f64,
    pub kd_w: f64,
    pub wall_setpoint: f64,
    pub spray_delay: f64,
    pub v_max: f64,
    /// Cap on the wall-normal speed; wall distance is measured at the
    /// LiDAR rate only, so fast approaches overshoot into the wall.
    pub v_wall_max: f64,
    /// Fixes older than this hold the drone and raise a timeout.
    pub fix_timeout: f64,
    /// Travel speed is limited to `travel_taper * remaining` near the
    /// target, 1/s.
    pub travel_taper: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            v_draw: 0.5,
            v_travel: 1.5,
            kp_n: 30.0,
            kd_n: 1.5,
            kp_w: 10.0,
            kd_w: 0.5,
            wall_setpoint: 0.10,
            spray_delay: 0.15,
            v_max: 2.5,
            v_wall_max: 0.5,
            fix_timeout: 0.3,
            travel_taper: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid controller config: {0}")]
pub struct ConfigError(pub &'static str);

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if [self.kp_n, self.kd_n, self.kp_w, self.kd_w].iter().any(|g| !(*g >= 0.0)) {
            return Err(ConfigError("gains must be non-negative"));
        }
        if !(self.v_draw > 0.0 && self.v_draw <= self.v_max) {
            return Err(ConfigError("need 0 < v_draw <= v_max"));
        }
        if !(self.v_travel > 0.0 && self.v_travel <= self.v_max) {
            return Err(ConfigError("need 0 < v_travel <= v_max"));
        }
        if !(self.v_wall_max > 0.0) {
            return Err(ConfigError("v_wall_max must be positive"));
        }
        if !(self.wall_setpoint > 0.0) {
            return Err(ConfigError("wall_setpoint must be positive"));
        }
        if !(0.10..=0.20).contains(&self.spray_delay) {
            return Err(ConfigError("spray_delay must lie in [0.10, 0.20] s"));
        }
        if !(self.fix_timeout > 0.0 && self.travel_taper > 0.0) {
            return Err(ConfigError("fix_timeout and travel_taper must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub arc_s: f64,
    pub point: Vec2,
    pub tangent: Vec2,
    /// Signed cross-track error, positive to the left of the tangent.
    pub error: f64,
}

/// Arc-length table cached alongside a path.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPath {
    pub path: PaintPath,
    pub arcs: Vec<f64>,
}

impl TrackedPath {
    pub fn new(path: PaintPath) -> Self {
        let arcs = path.arc_table();
        TrackedPath { path, arcs }
    }

    pub fn length(&self) -> f64 {
        self.arcs.last().copied().unwrap_or(0.0)
    }

    pub fn drawing_start(&self) -> f64 {
        self.path.lead_in_len
    }

    pub fn drawing_end(&self) -> f64 {
        (self.length() - self.path.lead_out_len).max(self.drawing_start())
    }

    pub fn sample(&self, s: f64) -> (Vec2, Vec2) {
        crate::compiler::sample_with_table(&self.path.points, &self.arcs, s)
    }

    /// Closest point restricted to `hint ± PROJECTION_WINDOW` so that paths
    /// revisiting the same area do not snap to a later (or earlier) pass.
    pub fn project(&self, pos: Vec2, hint: f64) -> Projection {
        let pts = &self.path.points;
        let total = self.length();
        if pts.len() < 2 || total <= 0.0 {
            let p = pts.first().copied().unwrap_or(Vec2::ZERO);
            let t = Vec2::new(1.0, 0.0);
            return Projection { arc_s: 0.0, point: p, tangent: t, error: (pos - p).dot(t.perp()) };
        }
        let hint = hint.clamp(0.0, total);
        let (lo, hi) = (hint - PROJECTION_WINDOW, hint + PROJECTION_WINDOW);
        let mut best: Option<(f64, f64, Vec2, Vec2)> = None;
        for i in 0..pts.len() - 1 {
            let (s0, s1) = (self.arcs[i], self.arcs[i + 1]);
            let seg = s1 - s0;
            if s1 < lo || s0 > hi || seg <= 0.0 {
                continue;
            }
            let dir = (pts[i + 1] - pts[i]) / seg;
            let f = (pos - pts[i]).dot(dir).clamp((lo - s0).max(0.0), (hi - s0).min(seg));
            let q = pts[i] + dir * f;
            let d = q.dist(pos);
            let s = s0 + f;
            let closer = match best {
                None => true,
                Some((bd, bs, _, _)) => d < bd - 1e-12 || (d <= bd + 1e-12 && (s - hint).abs() < (bs - hint).abs()),
            };
            if closer {
                best = Some((d, s, q, dir));
            }
        }
        let (_, s, q, t) = best.expect("window always overlaps the path");
        Projection { arc_s: s, point: q, tangent: t, error: (pos - q).dot(t.perp()) }
    }
}

/// Windowed projection of `pos` onto `path` around the arc position `hint`.
pub fn project_onto_path(pos: Vec2, path: &PaintPath, hint: f64) -> Projection {
    TrackedPath::new(path.clone()).project(pos, hint)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Drawing,
    Travel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// `(du, dv, dn)` in m/s.
    pub velocity: Vec3,
    pub projection: Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("fix is {age:.3} s old")]
    StaleFix { age: f64 },
}

fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max && n > 0.0 {
        v * (max / n)
    } else {
        v
    }
}

/// One controller update.
///
/// Along the path tangent the command is the constant target speed (no
/// position feedback); across the path a PD law acts on the cross-track
/// error and along the wall normal a second PD law holds the wall distance.
/// Derivatives are finite differences between `fix` and `fix_prev`; they
/// are taken as zero without a previous fix or when the fixes share a
/// timestamp.
pub fn control_step(
    now: f64,
    fix: &NavFix,
    fix_prev: Option<&NavFix>,
    path: &TrackedPath,
    hint: f64,
    cfg: &ControllerConfig,
    mode: Mode,
) -> Result<ControlOutput, ControlError> {
    let age = now - fix.timestamp;
    if age > cfg.fix_timeout {
        return Err(ControlError::StaleFix { age });
    }
    let pos = fix.position;
    let proj = path.project(pos.xy(), hint);
    let (e_rate, n_rate) = match fix_prev {
        Some(p) if fix.timestamp - p.timestamp > 0.0 => {
            let dt = fix.timestamp - p.timestamp;
            // measure the previous offset against the current normal so a
            // vertex between the two projections does not fake a jump
            let e_prev = (p.position.xy() - proj.point).dot(proj.tangent.perp());
            ((proj.error - e_prev) / dt, (pos.z - p.position.z) / dt)
        }
        _ => (0.0, 0.0),
    };
    let v_tan = match mode {
        Mode::Drawing => cfg.v_draw,
        Mode::Travel => {
            // past an end the projection clamps; the along-track overshoot
            // keeps the taper pulling back
            let along = (pos.xy() - proj.point).dot(proj.tangent);
            let remaining = path.length() - proj.arc_s - along;
            (cfg.travel_taper * remaining).clamp(-cfg.v_travel, cfg.v_travel)
        }
    };
    let v_norm = -(cfg.kp_n * proj.error + cfg.kd_n * e_rate);
    let v_wall = (-(cfg.kp_w * (pos.z - cfg.wall_setpoint) + cfg.kd_w * n_rate)).clamp(-cfg.v_wall_max, cfg.v_wall_max);
    let planar = proj.tangent * v_tan + proj.tangent.perp() * v_norm;
    let velocity = clamp_norm(Vec3::new(planar.x, planar.y, v_wall), cfg.v_max);
    Ok(ControlOutput { velocity, projection: proj })
}

/// Straight-line approach to a 3D point with the same taper as travel mode.
pub fn goto_step(pos: Vec3, target: Vec3, cfg: &ControllerConfig) -> Vec3 {
    let d = target - pos;
    let dist = d.norm();
    if dist < 1e-9 {
        return Vec3::ZERO;
    }
    let speed = (cfg.travel_taper * dist).min(cfg.v_travel).min(cfg.v_max);
    let v = d * (speed / dist);
    Vec3::new(v.x, v.y, v.z.clamp(-cfg.v_wall_max, cfg.v_wall_max))
}

/// Spray command along a path. Paint starts flowing `delay` seconds after
/// the command, so the nozzle is opened `delay * v_draw` before the drawing
/// portion starts and closed the same distance before it ends.
pub fn spray_schedule(arc_s: f64, drawing_start: f64, drawing_end: f64, delay: f64, v_draw: f64) -> bool {
    let lead = delay * v_draw;
    drawing_end > drawing_start && arc_s >= drawing_start - lead && arc_s < drawing_end - lead
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::PathKind;
    use crate::lidar::LinkSource;
    use alloc::vec;

    fn straight() -> TrackedPath {
        TrackedPath::new(PaintPath {
            id: 1,
            kind: PathKind::Outline,
            points: vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)],
            lead_in_len: 0.3,
            lead_out_len: 0.3,
        })
    }

    fn fix(t: f64, u: f64, v: f64, n: f64) -> NavFix {
        NavFix {
            drone_id: 1,
            timestamp: t,
            position: Vec3::new(u, v, n),
            yaw: 0.0,
            source: LinkSource::Primary,
            quality: 1.0,
        }
    }

    #[test]
    fn on_path_projection() {
        let p = straight().project(Vec2::new(0.7, 0.0), 0.5);
        assert_eq!(p.error, 0.0);
        assert_eq!(p.point, Vec2::new(0.7, 0.0));
    }

    #[test]
    fn left_of_tangent_is_positive() {
        let p = straight().project(Vec2::new(1.0, 0.05), 1.0);
        assert!((p.error - 0.05).abs() < 1e-15);
        assert_eq!(p.tangent, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn windowed_projection_stays_on_leg() {
        // U shape: up the left leg, across, down the right leg 0.3 m away
        let path = TrackedPath::new(PaintPath {
            id: 1,
            kind: PathKind::Outline,
            points: vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 2.0), Vec2::new(0.3, 2.0), Vec2::new(0.3, 0.0)],
            lead_in_len: 0.0,
            lead_out_len: 0.0,
        });
        let pos = Vec2::new(0.2, 0.5);
        // global brute force over a fine arc grid picks the right leg
        let total = path.length();
        let global = (0..=43000)
            .map(|k| k as f64 * total / 43000.0)
            .min_by(|a, b| path.sample(*a).0.dist(pos).total_cmp(&path.sample(*b).0.dist(pos)))
            .unwrap();
        assert!(global > 2.3, "global nearest on the far leg, s = {global}");
        let local = path.project(pos, 0.5);
        assert!(local.arc_s < 2.0, "windowed result must stay on the left leg");
        assert!((local.arc_s - 0.5).abs() < 1e-12);
        assert!((local.error + 0.2).abs() < 1e-12);
    }

    fn cfg() -> ControllerConfig {
        ControllerConfig { kp_n: 1.0, kd_n: 0.0, kp_w: 2.0, kd_w: 0.0, ..Default::default() }
    }

    #[test]
    fn on_path_command_is_pure_tangent() {
        let out = control_step(1.0, &fix(1.0, 0.5, 0.0, 0.1), None, &straight(), 0.5, &cfg(), Mode::Drawing).unwrap();
        assert_eq!(out.velocity, Vec3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn proportional_cross_track() {
        let out = control_step(1.0, &fix(1.0, 0.5, 0.05, 0.1), None, &straight(), 0.5, &cfg(), Mode::Drawing).unwrap();
        assert!((out.velocity.y + 0.05).abs() < 1e-15);
    }

    #[test]
    fn wall_distance_regulation() {
        let out = control_step(1.0, &fix(1.0, 0.5, 0.0, 0.15), None, &straight(), 0.5, &cfg(), Mode::Drawing).unwrap();
        assert!((out.velocity.z + 0.10).abs() < 1e-12);
    }

    #[test]
    fn derivative_terms() {
        let c = ControllerConfig { kp_n: 0.0, kd_n: 1.0, kp_w: 0.0, kd_w: 1.0, ..Default::default() };
        let prev = fix(0.9, 0.45, 0.0, 0.10);
        let now = fix(1.0, 0.5, 0.01, 0.12);
        let out = control_step(1.0, &now, Some(&prev), &straight(), 0.5, &c, Mode::Drawing).unwrap();
        assert!((out.velocity.y + 0.1).abs() < 1e-9);
        assert!((out.velocity.z + 0.2).abs() < 1e-9);
    }

    #[test]
    fn stale_fix_rejected() {
        let r = control_step(1.5, &fix(1.0, 0.5, 0.0, 0.1), None, &straight(), 0.5, &cfg(), Mode::Drawing);
        assert!(matches!(r, Err(ControlError::StaleFix { .. })));
    }

    #[test]
    fn command_clamped_to_vmax() {
        let c = ControllerConfig { kp_n: 100.0, ..Default::default() };
        let out = control_step(1.0, &fix(1.0, 0.5, 0.5, 0.1), None, &straight(), 0.5, &c, Mode::Drawing).unwrap();
        assert!((out.velocity.norm() - c.v_max).abs() < 1e-12);
        assert!(out.velocity.y < 0.0);
    }

    #[test]
    fn travel_tapers_at_end() {
        let c = ControllerConfig::default();
        let far = control_step(1.0, &fix(1.0, 0.2, 0.0, 0.1), None, &straight(), 0.2, &c, Mode::Travel).unwrap();
        assert!((far.velocity.x - c.v_travel).abs() < 1e-12);
        let near = control_step(1.0, &fix(1.0, 1.9, 0.0, 0.1), None, &straight(), 1.9, &c, Mode::Travel).unwrap();
        assert!((near.velocity.x - c.travel_taper * 0.1).abs() < 1e-9);
    }

    #[test]
    fn spray_trigger_distance() {
        // 0.5 m/s with 0.15 s delay: opens 7.5 cm early
        assert!(!spray_schedule(0.3 - 0.0751, 0.3, 1.7, 0.15, 0.5));
        assert!(spray_schedule(0.3 - 0.075, 0.3, 1.7, 0.15, 0.5));
        assert!(spray_schedule(1.7 - 0.0751, 0.3, 1.7, 0.15, 0.5));
        assert!(!spray_schedule(1.7 - 0.075, 0.3, 1.7, 0.15, 0.5));
    }

    #[test]
    fn zero_delay_triggers_at_boundary() {
        assert!(!spray_schedule(0.3 - 1e-12, 0.3, 1.7, 0.0, 0.5));
        assert!(spray_schedule(0.3, 0.3, 1.7, 0.0, 0.5));
        assert!(!spray_schedule(1.7, 0.3, 1.7, 0.0, 0.5));
    }

    #[test]
    fn default_config_valid() {
        assert!(ControllerConfig::default().validate().is_ok());
        let bad = ControllerConfig { spray_delay: 0.25, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
