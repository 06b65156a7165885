//! Drone plant: first-order velocity tracking with an acceleration limit,
//! plus battery drain.

#[allow(unused_imports)]
use crate::math::Float;
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cap {
    /// Narrow round footprint for lines.
    Thin,
    /// Vertically elongated footprint for flat fills.
    Wide,
}

impl Cap {
    pub fn as_str(self) -> &'static str {
        match self {
            Cap::Thin => "thin",
            Cap::Wide => "wide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "thin" => Some(Cap::Thin),
            "wide" => Some(Cap::Wide),
            _ => None,
        }
    }
}

/// Simulated ground truth of one drone, in wall coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneTruth {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    /// State of charge, `[0, 1]`.
    pub battery: f64,
    pub paint_g: f64,
    /// Nozzle actually open (after the actuation delay).
    pub spray_on: bool,
    pub cap: Cap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantConfig {
    /// Velocity time constant, s.
    pub tau: f64,
    /// m/s².
    pub accel_limit: f64,
    /// Battery fraction per second while airborne.
    pub hover_drain: f64,
    /// Extra fraction per second per m/s of commanded speed.
    pub load_drain: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig { tau: 0.15, accel_limit: 4.0, hover_drain: 1.0 / 600.0, load_drain: 5e-4 }
    }
}

/// Advances the plant by `dt`. The velocity relaxes exponentially towards
/// `cmd + wind` (exact discretization), unless that would exceed the
/// acceleration limit.
pub fn step_dynamics(truth: &mut DroneTruth, cmd: Vec3, wind: Vec3, dt: f64, plant: &PlantConfig) {
    let target = cmd + wind;
    let alpha = (-dt / plant.tau).exp();
    let v0 = truth.velocity;
    let mut v1 = target + (v0 - target) * alpha;
    let dv = v1 - v0;
    let max_dv = plant.accel_limit * dt;
    if dv.norm() > max_dv {
        v1 = v0 + dv * (max_dv / dv.norm());
        truth.position = truth.position + (v0 + v1) * (0.5 * dt);
    } else {
        truth.position = truth.position + target * dt + (v0 - target) * (plant.tau * (1.0 - alpha));
    }
    truth.velocity = v1;
    if truth.position.z < 0.0 {
        // wall contact
        truth.position.z = 0.0;
        truth.velocity.z = truth.velocity.z.max(0.0);
    }
    truth.battery = (truth.battery - dt * (plant.hover_drain + plant.load_drain * cmd.norm())).max(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> DroneTruth {
        DroneTruth {
            position: Vec3::new(1.0, 1.0, 0.5),
            velocity: Vec3::ZERO,
            yaw: 0.0,
            battery: 1.0,
            paint_g: 500.0,
            spray_on: false,
            cap: Cap::Thin,
        }
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let mut t = truth();
        for _ in 0..100 {
            step_dynamics(&mut t, Vec3::ZERO, Vec3::ZERO, 0.02, &PlantConfig::default());
        }
        assert_eq!(t.position, Vec3::new(1.0, 1.0, 0.5));
        assert_eq!(t.velocity, Vec3::ZERO);
    }

    #[test]
    fn step_response_matches_exponential() {
        let plant = PlantConfig { tau: 0.3, accel_limit: 1e9, ..PlantConfig::default() };
        let mut t = truth();
        let c = Vec3::new(0.5, -0.2, 0.1);
        let dt = 0.02;
        for _ in 0..100 {
            step_dynamics(&mut t, c, Vec3::ZERO, dt, &plant);
        }
        let time = 100.0 * dt;
        let k = 1.0 - (-time / plant.tau).exp();
        assert!((t.velocity - c * k).norm() < 1e-6);
        // position: integral of c (1 - e^{-t/tau})
        let x = c * (time - plant.tau * k);
        assert!((t.position - Vec3::new(1.0, 1.0, 0.5) - x).norm() < 1e-6);
    }

    #[test]
    fn wind_step_drifts_at_wind_speed() {
        let mut t = truth();
        t.position.z = 5.0;
        for _ in 0..500 {
            step_dynamics(&mut t, Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), 0.02, &PlantConfig::default());
        }
        assert!((t.velocity.x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn acceleration_is_limited() {
        let plant = PlantConfig::default();
        let mut t = truth();
        step_dynamics(&mut t, Vec3::new(2.0, 0.0, 0.0), Vec3::ZERO, 0.02, &plant);
        assert!((t.velocity.norm() - plant.accel_limit * 0.02).abs() < 1e-12);
    }

    #[test]
    fn battery_drains_with_load() {
        let plant = PlantConfig::default();
        let (mut a, mut b) = (truth(), truth());
        step_dynamics(&mut a, Vec3::ZERO, Vec3::ZERO, 1.0, &plant);
        step_dynamics(&mut b, Vec3::new(1.0, 0.0, 0.0), Vec3::ZERO, 1.0, &plant);
        assert!((1.0 - a.battery - plant.hover_drain).abs() < 1e-12);
        assert!(b.battery < a.battery);
    }
}
