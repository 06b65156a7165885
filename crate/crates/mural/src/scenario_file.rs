//! Scenario files: TOML with one table per subsystem. Every key is
//! optional; `Scenario::default()` fills the gaps and unknown keys are
//! rejected. `default_scenario_toml` prints the full default set.

use mural_core::control::ControllerConfig;
use mural_core::executor::ExecutorConfig;
use mural_core::fsm::Event;
use mural_core::lidar::RansacConfig;
use mural_core::math::{Vec2, Vec3};
use mural_core::sim::canvas::SprayModel;
use mural_core::sim::dynamics::{Cap, PlantConfig};
use mural_core::sim::link::LinkConfig;
use mural_core::sim::sensors::LidarSimConfig;
use mural_core::sim::wind::WindConfig;
use mural_core::sim::{CameraSetup, DroneSpec, Scenario, ScriptAction, ScriptItem, SimConfig};
use mural_core::vision::TrackerConfig;
use serde::{Deserialize, Serialize};

use crate::FormatError;

fn v3(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn from3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub seed: u64,
    pub tick_hz: f64,
    pub camera_hz: f64,
    pub lidar_hz: f64,
    pub max_time_s: f64,
    pub auto_takeoff: bool,
    pub sigma_px: f64,
    pub canvas_cell_m: f64,
    pub canvas_margin_m: f64,
    pub stroke_width_m: f64,
    pub actuation_delay_s: f64,
    pub paint_capacity_g: f64,
    pub battery_low: f64,
    pub swap_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub tau_s: f64,
    pub accel_limit: f64,
    pub hover_drain_per_s: f64,
    pub load_drain_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindSection {
    pub mean: [f64; 3],
    pub gust_amplitude: f64,
    pub gust_min_hz: f64,
    pub gust_max_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarSection {
    pub samples: usize,
    pub max_range_m: f64,
    pub sigma_m: f64,
    pub outlier_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub primary_latency_s: f64,
    pub backup_latency_s: f64,
    pub primary_drops: Vec<[f64; 2]>,
    pub backup_drops: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpraySection {
    pub thin_sigma_per_m: f64,
    pub wide_sigma_per_m: f64,
    pub wide_aspect: f64,
    pub thin_flow_gps: f64,
    pub wide_flow_gps: f64,
    pub max_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraSection {
    pub focal_px: f64,
    pub image_size: [u32; 2],
    pub distance_m: f64,
    /// Empty means "center on the plan and pads".
    pub aim: Vec<f64>,
    pub calib_sigma_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSection {
    pub proximity_px: f64,
    pub angle_tolerance_deg: f64,
    pub max_staleness: u32,
    pub spacing_tol: f64,
    pub min_intensity: f64,
    pub aoi_size_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacSection {
    pub iterations: u32,
    pub inlier_tol_m: f64,
    pub min_inliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub v_draw: f64,
    pub v_travel: f64,
    pub v_max: f64,
    pub v_wall_max: f64,
    pub kp_n: f64,
    pub kd_n: f64,
    pub kp_w: f64,
    pub kd_w: f64,
    pub wall_setpoint_m: f64,
    pub spray_delay_s: f64,
    pub fix_timeout_s: f64,
    pub travel_taper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorSection {
    pub takeoff_climb_m: f64,
    pub arrive_tol_m: f64,
    pub swap_limit_s: f64,
    pub resume_lead_in_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSection {
    pub id: u32,
    pub pattern_angle_deg: f64,
    #[serde(default = "default_spacing")]
    pub marker_spacing_m: f64,
    pub home: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default = "default_cap")]
    pub cap: String,
    #[serde(default = "default_battery")]
    pub battery: f64,
    /// Omitted: the drone takes a vertical strip of the wall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<u32>>,
}

fn default_spacing() -> f64 {
    0.1
}

fn default_cap() -> String {
    "thin".into()
}

fn default_battery() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSection {
    pub t: f64,
    pub drone: u32,
    /// takeoff | land | pause | resume | goto | draw | reboot_fcu |
    /// battery_low | occlude
    pub action: String,
    /// goto target (u, v, n).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<[f64; 3]>,
    /// occlude: which markers disappear.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<[bool; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub sim: SimSection,
    pub plant: PlantSection,
    pub wind: WindSection,
    pub lidar: LidarSection,
    pub link: LinkSection,
    pub spray: SpraySection,
    pub camera: CameraSection,
    pub tracker: TrackerSection,
    pub ransac: RansacSection,
    pub controller: ControllerSection,
    pub executor: ExecutorSection,
    pub drone: Vec<DroneSection>,
    pub script: Vec<ScriptSection>,
}

macro_rules! section_defaults {
    ($($field:ident: $t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                ScenarioFile::from(&Scenario::default()).$field
            }
        }
    )*};
}

section_defaults!(sim: SimSection, plant: PlantSection, wind: WindSection, lidar: LidarSection, link: LinkSection,
    spray: SpraySection, camera: CameraSection, tracker: TrackerSection, ransac: RansacSection,
    controller: ControllerSection, executor: ExecutorSection);

impl Default for ScenarioFile {
    fn default() -> Self {
        ScenarioFile::from(&Scenario::default())
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(sc: &Scenario) -> Self {
        let s = &sc.sim;
        let c = &sc.executor.controller;
        let e = &sc.executor;
        ScenarioFile {
            sim: SimSection {
                seed: s.seed,
                tick_hz: s.tick_hz,
                camera_hz: s.camera_hz,
                lidar_hz: s.lidar_hz,
                max_time_s: s.max_time,
                auto_takeoff: s.auto_takeoff,
                sigma_px: s.sigma_px,
                canvas_cell_m: s.canvas_cell,
                canvas_margin_m: s.canvas_margin,
                stroke_width_m: s.stroke_width,
                actuation_delay_s: s.actuation_delay,
                paint_capacity_g: s.paint_capacity_g,
                battery_low: s.battery_low,
                swap_duration_s: s.swap_duration,
            },
            plant: PlantSection {
                tau_s: s.plant.tau,
                accel_limit: s.plant.accel_limit,
                hover_drain_per_s: s.plant.hover_drain,
                load_drain_per_m: s.plant.load_drain,
            },
            wind: WindSection {
                mean: v3(s.wind.mean),
                gust_amplitude: s.wind.gust_amplitude,
                gust_min_hz: s.wind.gust_min_hz,
                gust_max_hz: s.wind.gust_max_hz,
            },
            lidar: LidarSection {
                samples: s.lidar.samples,
                max_range_m: s.lidar.max_range,
                sigma_m: s.lidar.sigma,
                outlier_fraction: s.lidar.outlier_fraction,
            },
            link: LinkSection {
                primary_latency_s: s.link.primary_latency,
                backup_latency_s: s.link.backup_latency,
                primary_drops: s.link.primary_drops.iter().map(|(a, b)| [*a, *b]).collect(),
                backup_drops: s.link.backup_drops.iter().map(|(a, b)| [*a, *b]).collect(),
            },
            spray: SpraySection {
                thin_sigma_per_m: s.spray.thin_sigma_per_m,
                wide_sigma_per_m: s.spray.wide_sigma_per_m,
                wide_aspect: s.spray.wide_aspect,
                thin_flow_gps: s.spray.thin_flow_gps,
                wide_flow_gps: s.spray.wide_flow_gps,
                max_distance_m: s.spray.max_distance,
            },
            camera: CameraSection {
                focal_px: s.camera.focal_px,
                image_size: [s.camera.image_size.0, s.camera.image_size.1],
                distance_m: s.camera.distance,
                aim: s.camera.aim.map(|a| vec![a.x, a.y]).unwrap_or_default(),
                calib_sigma_px: s.camera.calib_sigma_px,
            },
            tracker: TrackerSection {
                proximity_px: s.tracker.proximity_px,
                angle_tolerance_deg: s.tracker.angle_tolerance_deg,
                max_staleness: s.tracker.max_staleness,
                spacing_tol: s.tracker.spacing_tol,
                min_intensity: s.tracker.min_intensity,
                aoi_size_px: s.tracker.aoi_size,
            },
            ransac: RansacSection { iterations: s.ransac.iterations, inlier_tol_m: s.ransac.inlier_tol, min_inliers: s.ransac.min_inliers },
            controller: ControllerSection {
                v_draw: c.v_draw,
                v_travel: c.v_travel,
                v_max: c.v_max,
                v_wall_max: c.v_wall_max,
                kp_n: c.kp_n,
                kd_n: c.kd_n,
                kp_w: c.kp_w,
                kd_w: c.kd_w,
                wall_setpoint_m: c.wall_setpoint,
                spray_delay_s: c.spray_delay,
                fix_timeout_s: c.fix_timeout,
                travel_taper: c.travel_taper,
            },
            executor: ExecutorSection {
                takeoff_climb_m: e.takeoff_climb,
                arrive_tol_m: e.arrive_tol,
                swap_limit_s: e.swap_limit,
                resume_lead_in_m: e.resume_lead_in,
            },
            drone: sc
                .drones
                .iter()
                .map(|d| DroneSection {
                    id: d.id,
                    pattern_angle_deg: d.pattern_angle_deg,
                    marker_spacing_m: d.marker_spacing,
                    home: v3(d.home),
                    yaw: d.yaw,
                    cap: d.cap.as_str().into(),
                    battery: d.battery,
                    paths: d.paths.clone(),
                })
                .collect(),
            script: sc.script.iter().map(script_section).collect(),
        }
    }
}

fn script_section(item: &ScriptItem) -> ScriptSection {
    let mut s = ScriptSection { t: item.t, drone: item.drone, action: String::new(), target: None, hidden: None, duration_s: None };
    s.action = match item.action {
        ScriptAction::Command(Event::CmdTakeoff) => "takeoff".into(),
        ScriptAction::Command(Event::CmdLand) => "land".into(),
        ScriptAction::Command(Event::CmdPause) => "pause".into(),
        ScriptAction::Command(Event::CmdResume) => "resume".into(),
        ScriptAction::Command(Event::CmdReboot) => "reboot_fcu".into(),
        ScriptAction::Command(Event::CmdGoto(p)) => {
            s.target = Some(v3(p));
            "goto".into()
        }
        ScriptAction::Command(other) => other.name().into(),
        ScriptAction::Draw => "draw".into(),
        ScriptAction::BatteryLow => "battery_low".into(),
        ScriptAction::Occlude { hidden, duration } => {
            s.hidden = Some(hidden);
            s.duration_s = Some(duration);
            "occlude".into()
        }
    };
    s
}

fn script_action(s: &ScriptSection) -> Result<ScriptAction, FormatError> {
    let bad = |why: &str| FormatError::Scenario(format!("script item at t = {}: {why}", s.t));
    Ok(match s.action.as_str() {
        "takeoff" => ScriptAction::Command(Event::CmdTakeoff),
        "land" => ScriptAction::Command(Event::CmdLand),
        "pause" => ScriptAction::Command(Event::CmdPause),
        "resume" => ScriptAction::Command(Event::CmdResume),
        "reboot_fcu" => ScriptAction::Command(Event::CmdReboot),
        "draw" => ScriptAction::Draw,
        "goto" => ScriptAction::Command(Event::CmdGoto(from3(s.target.ok_or_else(|| bad("goto needs target"))?))),
        "battery_low" => ScriptAction::BatteryLow,
        "occlude" => ScriptAction::Occlude {
            hidden: s.hidden.ok_or_else(|| bad("occlude needs hidden"))?,
            duration: s.duration_s.ok_or_else(|| bad("occlude needs duration_s"))?,
        },
        other => return Err(bad(&format!("unknown action {other:?}"))),
    })
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<Scenario, FormatError> {
        let s = &self.sim;
        let c = &self.controller;
        let aim = match self.camera.aim.as_slice() {
            [] => None,
            [u, v] => Some(Vec2::new(*u, *v)),
            _ => return Err(FormatError::Scenario("camera.aim must be [] or [u, v]".into())),
        };
        let mut drones = Vec::with_capacity(self.drone.len());
        for d in &self.drone {
            let cap = Cap::parse(&d.cap).ok_or_else(|| FormatError::Scenario(format!("drone {}: unknown cap {:?}", d.id, d.cap)))?;
            drones.push(DroneSpec {
                id: d.id,
                pattern_angle_deg: d.pattern_angle_deg,
                marker_spacing: d.marker_spacing_m,
                home: from3(d.home),
                yaw: d.yaw,
                cap,
                battery: d.battery,
                paths: d.paths.clone(),
            });
        }
        let mut script = Vec::with_capacity(self.script.len());
        for item in &self.script {
            script.push(ScriptItem { t: item.t, drone: item.drone, action: script_action(item)? });
        }
        let sim = SimConfig {
            tick_hz: s.tick_hz,
            camera_hz: s.camera_hz,
            lidar_hz: s.lidar_hz,
            plant: PlantConfig {
                tau: self.plant.tau_s,
                accel_limit: self.plant.accel_limit,
                hover_drain: self.plant.hover_drain_per_s,
                load_drain: self.plant.load_drain_per_m,
            },
            wind: WindConfig {
                mean: from3(self.wind.mean),
                gust_amplitude: self.wind.gust_amplitude,
                gust_min_hz: self.wind.gust_min_hz,
                gust_max_hz: self.wind.gust_max_hz,
            },
            sigma_px: s.sigma_px,
            lidar: LidarSimConfig {
                samples: self.lidar.samples,
                max_range: self.lidar.max_range_m,
                sigma: self.lidar.sigma_m,
                outlier_fraction: self.lidar.outlier_fraction,
            },
            link: LinkConfig {
                primary_latency: self.link.primary_latency_s,
                backup_latency: self.link.backup_latency_s,
                primary_drops: self.link.primary_drops.iter().map(|w| (w[0], w[1])).collect(),
                backup_drops: self.link.backup_drops.iter().map(|w| (w[0], w[1])).collect(),
            },
            seed: s.seed,
            canvas_cell: s.canvas_cell_m,
            canvas_margin: s.canvas_margin_m,
            spray: SprayModel {
                thin_sigma_per_m: self.spray.thin_sigma_per_m,
                wide_aspect: self.spray.wide_aspect,
                wide_sigma_per_m: self.spray.wide_sigma_per_m,
                thin_flow_gps: self.spray.thin_flow_gps,
                wide_flow_gps: self.spray.wide_flow_gps,
                max_distance: self.spray.max_distance_m,
            },
            actuation_delay: s.actuation_delay_s,
            paint_capacity_g: s.paint_capacity_g,
            battery_low: s.battery_low,
            swap_duration: s.swap_duration_s,
            max_time: s.max_time_s,
            camera: CameraSetup {
                focal_px: self.camera.focal_px,
                image_size: (self.camera.image_size[0], self.camera.image_size[1]),
                distance: self.camera.distance_m,
                aim,
                calib_sigma_px: self.camera.calib_sigma_px,
            },
            tracker: TrackerConfig {
                proximity_px: self.tracker.proximity_px,
                angle_tolerance_deg: self.tracker.angle_tolerance_deg,
                max_staleness: self.tracker.max_staleness,
                spacing_tol: self.tracker.spacing_tol,
                min_intensity: self.tracker.min_intensity,
                aoi_size: self.tracker.aoi_size_px,
            },
            ransac: RansacConfig {
                iterations: self.ransac.iterations,
                inlier_tol: self.ransac.inlier_tol_m,
                min_inliers: self.ransac.min_inliers,
                seed: 0,
            },
            stroke_width: s.stroke_width_m,
            auto_takeoff: s.auto_takeoff,
        };
        let executor = ExecutorConfig {
            controller: ControllerConfig {
                v_draw: c.v_draw,
                v_travel: c.v_travel,
                kp_n: c.kp_n,
                kd_n: c.kd_n,
                kp_w: c.kp_w,
                kd_w: c.kd_w,
                wall_setpoint: c.wall_setpoint_m,
                spray_delay: c.spray_delay_s,
                v_max: c.v_max,
                v_wall_max: c.v_wall_max,
                fix_timeout: c.fix_timeout_s,
                travel_taper: c.travel_taper,
            },
            home: ExecutorConfig::default().home,
            takeoff_climb: self.executor.takeoff_climb_m,
            arrive_tol: self.executor.arrive_tol_m,
            swap_limit: self.executor.swap_limit_s,
            resume_lead_in: self.executor.resume_lead_in_m,
        };
        let sc = Scenario { sim, executor, drones, script };
        sc.validate().map_err(|e| FormatError::Scenario(e.to_string()))?;
        Ok(sc)
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, FormatError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| FormatError::Scenario(e.message().to_string()))?;
    file.to_scenario()
}

pub fn scenario_to_toml(sc: &Scenario) -> String {
    toml::to_string(&ScenarioFile::from(sc)).expect("scenario serializes")
}

/// The complete default scenario, every key spelled out.
pub fn default_scenario_toml() -> String {
    scenario_to_toml(&Scenario::default())
}
