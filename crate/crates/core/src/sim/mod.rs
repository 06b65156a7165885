//! Deterministic world simulation: drone plants with wind, synthetic
//! sensors feeding the real tracking and fusion code, the radio link, the
//! on-board executors and paint deposition.

pub mod canvas;
pub mod dynamics;
pub mod link;
pub mod sensors;
pub mod wind;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assign::{assign_paths, strip_selection, AssignError};
use crate::compiler::MissionPlan;
use crate::executor::{Executor, ExecutorConfig, LogKind};
use crate::fsm::{Event, FsmState};
use crate::geom::{CameraModel, Intrinsics, WallFrame};
use crate::lidar::{fuse, ransac_wall_fit, LinkSource, NavFix, RansacConfig, WallFit};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{percentile, Vec2, Vec3};
use crate::progress::MissionProgress;
use crate::vision::{calibrate_camera, track_frame, CalibError, MarkerLayout, TrackState, TrackerConfig};

use canvas::{score, Canvas, Grid, Raster, Score, SprayModel};
use dynamics::{step_dynamics, Cap, DroneTruth, PlantConfig};
use link::{inject_link_model, LinkConfig};
use sensors::{render_scan, render_spots, LidarSimConfig, MarkerView};
use wind::{Wind, WindConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSetup {
    pub focal_px: f64,
    pub image_size: (u32, u32),
    /// Distance of the camera from the wall, m.
    pub distance: f64,
    /// Wall point the camera looks at; defaults to the middle of the plan
    /// and the landing pads.
    pub aim: Option<Vec2>,
    /// Pixel noise on the calibration marker detections.
    pub calib_sigma_px: f64,
}

impl Default for CameraSetup {
    fn default() -> Self {
        CameraSetup { focal_px: 1400.0, image_size: (1920, 1080), distance: 5.0, aim: None, calib_sigma_px: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub tick_hz: f64,
    pub camera_hz: f64,
    pub lidar_hz: f64,
    pub plant: PlantConfig,
    pub wind: WindConfig,
    /// Marker pixel noise.
    pub sigma_px: f64,
    pub lidar: LidarSimConfig,
    pub link: LinkConfig,
    pub seed: u64,
    pub canvas_cell: f64,
    /// Canvas margin around the plan extent, m.
    pub canvas_margin: f64,
    pub spray: SprayModel,
    /// Actual nozzle actuation delay, s.
    pub actuation_delay: f64,
    pub paint_capacity_g: f64,
    /// Battery fraction that raises the low-battery event.
    pub battery_low: f64,
    /// Time the ground crew needs for a swap, s.
    pub swap_duration: f64,
    /// Hard stop, simulated seconds.
    pub max_time: f64,
    pub camera: CameraSetup,
    pub tracker: TrackerConfig,
    pub ransac: RansacConfig,
    /// Target stroke width for scoring, m.
    pub stroke_width: f64,
    /// Send takeoff to every drone with work at t = 0.
    pub auto_takeoff: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_hz: 50.0,
            camera_hz: 30.0,
            lidar_hz: 10.0,
            plant: PlantConfig::default(),
            wind: WindConfig::default(),
            sigma_px: 0.2,
            lidar: LidarSimConfig::default(),
            link: LinkConfig::default(),
            seed: 1,
            canvas_cell: 0.005,
            canvas_margin: 0.05,
            spray: SprayModel::default(),
            actuation_delay: 0.15,
            paint_capacity_g: 500.0,
            battery_low: 0.2,
            swap_duration: 8.0,
            max_time: 900.0,
            camera: CameraSetup::default(),
            tracker: TrackerConfig::default(),
            ransac: RansacConfig::default(),
            stroke_width: 0.02,
            auto_takeoff: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneSpec {
    pub id: u32,
    pub pattern_angle_deg: f64,
    pub marker_spacing: f64,
    /// Landing pad, wall coordinates.
    pub home: Vec3,
    pub yaw: f64,
    pub cap: Cap,
    pub battery: f64,
    /// Explicit path selection; `None` takes a vertical strip of the wall.
    pub paths: Option<Vec<u32>>,
}

impl DroneSpec {
    pub fn new(id: u32, pattern_angle_deg: f64, home: Vec3) -> Self {
        DroneSpec { id, pattern_angle_deg, marker_spacing: 0.1, home, yaw: 0.0, cap: Cap::Thin, battery: 1.0, paths: None }
    }

    pub fn layout(&self) -> MarkerLayout {
        MarkerLayout { drone_id: self.id, pattern_angle_deg: self.pattern_angle_deg, spacing: self.marker_spacing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptAction {
    /// Operator command, sent over the primary link.
    Command(Event),
    /// Manual drawing start, resolved against the drone's state when sent.
    Draw,
    /// Forces the on-board low-battery warning.
    BatteryLow,
    /// Hides markers for `duration` seconds.
    Occlude { hidden: [bool; 3], duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptItem {
    pub t: f64,
    pub drone: u32,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sim: SimConfig,
    /// Shared executor settings; each drone's home replaces `home`.
    pub executor: ExecutorConfig,
    pub drones: Vec<DroneSpec>,
    pub script: Vec<ScriptItem>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            sim: SimConfig::default(),
            executor: ExecutorConfig::default(),
            drones: vec![
                DroneSpec::new(1, 0.0, Vec3::new(0.5, -0.3, 0.8)),
                DroneSpec::new(2, 90.0, Vec3::new(1.5, -0.3, 0.8)),
            ],
            script: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("path assignment: {0}")]
    Assign(#[from] AssignError),
    #[error("camera calibration failed: {0}")]
    Calibration(#[from] CalibError),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::Invalid(msg.into())
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let s = &self.sim;
        for (name, v) in [("tick_hz", s.tick_hz), ("camera_hz", s.camera_hz), ("lidar_hz", s.lidar_hz), ("tau", s.plant.tau)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if s.camera_hz > s.tick_hz || s.lidar_hz > s.tick_hz {
            return Err(invalid("sensor rates cannot exceed tick_hz"));
        }
        if !(s.plant.accel_limit > 0.0) {
            return Err(invalid("accel_limit must be positive"));
        }
        if !(s.sigma_px >= 0.0) || !(s.lidar.sigma >= 0.0) || !(0.0..=1.0).contains(&s.lidar.outlier_fraction) {
            return Err(invalid("noise settings out of range"));
        }
        if !(s.canvas_cell > 0.0) || !(s.canvas_margin >= 0.0) {
            return Err(invalid("canvas cell must be positive"));
        }
        if !(s.actuation_delay >= 0.0) || !(s.swap_duration >= 0.0) || !(s.max_time > 0.0) {
            return Err(invalid("delays and durations must be non-negative"));
        }
        if !(s.paint_capacity_g > 0.0) || !(0.0..1.0).contains(&s.battery_low) {
            return Err(invalid("paint capacity or battery threshold out of range"));
        }
        if !(s.camera.distance > 0.0) || !(s.camera.focal_px > 0.0) {
            return Err(invalid("camera distance and focal length must be positive"));
        }
        s.link.validate().map_err(invalid)?;
        self.executor.controller.validate().map_err(|e| invalid(format!("{e}")))?;
        if self.drones.is_empty() {
            return Err(invalid("no drones"));
        }
        let layouts: Vec<MarkerLayout> = self.drones.iter().map(DroneSpec::layout).collect();
        MarkerLayout::validate_set(&layouts, s.tracker.angle_tolerance_deg).map_err(invalid)?;
        for d in &self.drones {
            if !(d.home.z > 0.0) || !(0.0..=1.0).contains(&d.battery) {
                return Err(invalid(format!("drone {}: home must be off the wall and battery in [0, 1]", d.id)));
            }
        }
        for item in &self.script {
            if !(item.t >= 0.0) || !self.drones.iter().any(|d| d.id == item.drone) {
                return Err(invalid(format!("script item at t = {} targets unknown drone {}", item.t, item.drone)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    /// 0 for events that concern no single drone.
    pub drone: u32,
    pub kind: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Telemetry {
    pub drone: u32,
    pub fsm: FsmState,
    pub battery: f64,
    pub paint_g: f64,
    pub spray_s: f64,
}

/// What one tick produced, for observers such as the ground station.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    /// Fixes computed this tick (before the link).
    pub fixes: Vec<NavFix>,
    pub events: Vec<SimEvent>,
    /// Drones whose progress record changed.
    pub progress_changed: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Fix(NavFix),
    Command(Event),
}

#[derive(Debug, Clone, Default)]
struct Accum {
    xte: Vec<f64>,
    speed_dev: Vec<f64>,
    wall_dev: f64,
    min_wall: Option<f64>,
    travel: f64,
    fixes_primary: u64,
    fixes_backup: u64,
    last_fix_arrival: Option<f64>,
    max_fix_gap: f64,
    swaps: u64,
    last_source: Option<LinkSource>,
}

#[derive(Debug, Clone)]
pub struct SimDrone {
    pub spec: DroneSpec,
    pub truth: DroneTruth,
    pub exec: Executor,
    pub fit: Option<WallFit>,
    lidar_rng: ChaCha8Rng,
    scans: u64,
    nozzle: VecDeque<(f64, bool)>,
    battery_warned: bool,
    paint_warned: bool,
    swap_elapsed: f64,
    occlusion: Option<([bool; 3], f64)>,
    acc: Accum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneMetrics {
    pub id: u32,
    pub final_state: FsmState,
    pub paths_assigned: usize,
    pub paths_done: usize,
    pub cross_track_mean_m: f64,
    pub cross_track_p95_m: f64,
    pub cross_track_max_m: f64,
    pub speed_dev_mean: f64,
    pub speed_dev_max: f64,
    /// Largest wall-distance deviation while drawing.
    pub wall_dev_max_m: f64,
    /// Closest approach to the wall in flight.
    pub wall_min_m: f64,
    pub travel_m: f64,
    pub spray_s: f64,
    pub paint_used_g: f64,
    pub battery: f64,
    pub fixes_primary: u64,
    pub fixes_backup: u64,
    pub max_fix_gap_s: f64,
    pub identity_swaps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub sim_time_s: f64,
    pub ticks: u64,
    /// Every drone grounded with its work done before the time limit.
    pub completed: bool,
    pub score: Score,
    pub cross_track_mean_m: f64,
    pub cross_track_p95_m: f64,
    pub cross_track_max_m: f64,
    pub speed_dev_mean: f64,
    pub speed_dev_max: f64,
    pub wall_dev_max_m: f64,
    pub travel_m: f64,
    pub identity_swaps: u64,
    pub paint_initial_g: f64,
    pub paint_remaining_g: f64,
    pub paint_canvas_g: f64,
    pub paint_lost_g: f64,
    pub mass_balance_rel_err: f64,
    pub calibration_rms_px: f64,
    pub drones: Vec<DroneMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub canvas: Canvas,
    pub target: Raster,
    pub painted: Raster,
    pub paint_threshold: f64,
    pub metrics: Metrics,
    pub events: Vec<SimEvent>,
    pub progress: BTreeMap<u32, MissionProgress>,
}

fn mix(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn to_ns(t: f64) -> u64 {
    (t * 1e9).round().max(0.0) as u64
}

/// Frame-filling calibration targets: wall points seen near the image
/// corners.
fn calibration_targets(cam: &CameraModel, wall: &WallFrame) -> Result<[Vec3; 4], SimError> {
    let (w, h) = (cam.image_size.0 as f64, cam.image_size.1 as f64);
    let corners = [(0.08, 0.08), (0.92, 0.08), (0.92, 0.92), (0.08, 0.92)];
    let mut out = [Vec3::ZERO; 4];
    for (k, (fx, fy)) in corners.iter().enumerate() {
        let beam = crate::geom::beam_from_pixel(cam, Vec2::new(fx * w, fy * h)).map_err(|e| invalid(format!("{e}")))?;
        let p = crate::geom::intersect_beam_at_wall_distance(&beam, wall, 0.0).map_err(|e| invalid(format!("{e}")))?;
        let mut c = wall.to_wall(p);
        c.z = 0.0;
        out[k] = c;
    }
    Ok(out)
}

pub struct Sim {
    pub scenario: Scenario,
    pub plan: MissionPlan,
    pub wall: WallFrame,
    pub camera_truth: CameraModel,
    pub camera: CameraModel,
    pub calibration_rms_px: f64,
    pub drones: Vec<SimDrone>,
    layouts: Vec<MarkerLayout>,
    track: TrackState,
    wind: Wind,
    cam_rng: ChaCha8Rng,
    canvas: Canvas,
    target: Raster,
    tick: u64,
    frames: u64,
    scans: u64,
    script_idx: usize,
    queue: BTreeMap<(u64, u64), (u32, LinkSource, Payload)>,
    seq: u64,
    events: Vec<SimEvent>,
    lost_g: f64,
    initial_g: f64,
    swaps: u64,
    lost_seen: u64,
    finished: bool,
}

impl Sim {
    pub fn new(scenario: Scenario, plan: MissionPlan) -> Result<Sim, SimError> {
        scenario.validate()?;
        let cfg = &scenario.sim;
        let wall = WallFrame::standard();

        // path slices
        let strips = strip_selection(&plan, scenario.drones.len());
        let selections: Vec<(u32, Vec<u32>)> = scenario
            .drones
            .iter()
            .enumerate()
            .map(|(k, d)| (d.id, d.paths.clone().unwrap_or_else(|| strips[k].clone())))
            .collect();
        let slices = assign_paths(&plan, &selections)?;

        // camera and its calibration
        let (w, h) = plan.wall_extent;
        let aim = cfg.camera.aim.unwrap_or_else(|| {
            let lo = scenario.drones.iter().map(|d| d.home.y).fold(0.0, f64::min);
            Vec2::new(0.5 * w, 0.5 * (lo + h))
        });
        let intr = Intrinsics {
            focal_px: cfg.camera.focal_px,
            principal_point: Vec2::new(cfg.camera.image_size.0 as f64 / 2.0, cfg.camera.image_size.1 as f64 / 2.0),
            image_size: cfg.camera.image_size,
        };
        let eye = wall.to_world(Vec3::new(aim.x, aim.y, cfg.camera.distance));
        let camera_truth = CameraModel::looking_at(intr, eye, wall.to_world(Vec3::new(aim.x, aim.y, 0.0)), wall.v_axis)
            .map_err(|e| invalid(format!("{e}")))?;
        let targets = calibration_targets(&camera_truth, &wall)?;
        let mut calib_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 3));
        let views: Vec<Vec2> = targets.iter().map(|t| camera_truth.project(wall.to_world(*t)).unwrap_or(Vec2::ZERO)).collect();
        let noisy: [Vec2; 4] = core::array::from_fn(|k| {
            let s = cfg.camera.calib_sigma_px;
            if s > 0.0 {
                use rand_distr::{Distribution, Normal};
                let n = Normal::new(0.0, s).expect("finite sigma");
                views[k] + Vec2::new(n.sample(&mut calib_rng), n.sample(&mut calib_rng))
            } else {
                views[k]
            }
        });
        let calib = calibrate_camera(&noisy, &targets, intr, &wall)?;

        let drones = scenario
            .drones
            .iter()
            .zip(slices)
            .map(|(spec, (_, slice))| {
                let mut ecfg = scenario.executor;
                ecfg.home = spec.home;
                let mut exec = Executor::new(spec.id, ecfg);
                exec.load_mission(slice, None);
                exec.take_dirty();
                SimDrone {
                    spec: spec.clone(),
                    truth: DroneTruth {
                        position: spec.home,
                        velocity: Vec3::ZERO,
                        yaw: spec.yaw,
                        battery: spec.battery,
                        paint_g: cfg.paint_capacity_g,
                        spray_on: false,
                        cap: spec.cap,
                    },
                    exec,
                    fit: None,
                    lidar_rng: ChaCha8Rng::seed_from_u64(mix(cfg.seed, 100 + spec.id as u64)),
                    scans: 0,
                    nozzle: VecDeque::new(),
                    battery_warned: false,
                    paint_warned: false,
                    swap_elapsed: 0.0,
                    occlusion: None,
                    acc: Accum::default(),
                }
            })
            .collect::<Vec<_>>();

        let min = Vec2::new(-cfg.canvas_margin, -cfg.canvas_margin);
        let max = Vec2::new(w + cfg.canvas_margin, h + cfg.canvas_margin);
        let grid = Grid::covering(min, max, cfg.canvas_cell);
        let mut target = Raster::empty(grid);
        for d in &drones {
            if let Some(m) = &d.exec.mission {
                for p in &m.paths {
                    target.stamp_polyline(&p.drawing_points(), 0.5 * cfg.stroke_width);
                }
            }
        }
        let initial_g = cfg.paint_capacity_g * drones.len() as f64;
        let layouts = scenario.drones.iter().map(DroneSpec::layout).collect();
        let mut script = scenario.script.clone();
        script.sort_by(|a, b| a.t.total_cmp(&b.t));
        let wind = Wind::new(&cfg.wind, mix(cfg.seed, 2));
        let cam_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 1));
        let mut sim = Sim {
            scenario: Scenario { script, ..scenario },
            plan,
            wall,
            camera_truth,
            camera: calib.camera,
            calibration_rms_px: calib.rms_px,
            drones,
            layouts,
            track: TrackState::default(),
            wind,
            cam_rng,
            canvas: Canvas::new(grid),
            target,
            tick: 0,
            frames: 0,
            scans: 0,
            script_idx: 0,
            queue: BTreeMap::new(),
            seq: 0,
            events: Vec::new(),
            lost_g: 0.0,
            initial_g,
            swaps: 0,
            lost_seen: 0,
            finished: false,
        };
        let rms = sim.calibration_rms_px;
        sim.log(0.0, 0, "calibration", format!("rms {rms:.4} px"));
        if sim.scenario.sim.auto_takeoff {
            let ids: Vec<u32> = sim
                .drones
                .iter()
                .filter(|d| d.exec.mission.as_ref().is_some_and(|m| !m.paths.is_empty()))
                .map(|d| d.spec.id)
                .collect();
            for id in ids {
                sim.command(id, Event::CmdTakeoff);
            }
        }
        Ok(sim)
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.scenario.sim.tick_hz
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.scenario.sim.tick_hz
    }

    pub fn canvas(&self) -> &Canvas {
        &self.canvas
    }

    pub fn target(&self) -> &Raster {
        &self.target
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn drone(&self, id: u32) -> Option<&SimDrone> {
        self.drones.iter().find(|d| d.spec.id == id)
    }

    pub fn telemetry(&self) -> Vec<Telemetry> {
        self.drones
            .iter()
            .map(|d| Telemetry {
                drone: d.spec.id,
                fsm: d.exec.state(),
                battery: d.truth.battery,
                paint_g: d.truth.paint_g,
                spray_s: d.exec.progress.spray_seconds,
            })
            .collect()
    }

    fn log(&mut self, t: f64, drone: u32, kind: &'static str, detail: String) {
        self.events.push(SimEvent { t, drone, kind, detail });
    }

    /// Sends an operator command to a drone over the primary link.
    pub fn command(&mut self, drone: u32, event: Event) {
        let t = self.time();
        let deliveries = inject_link_model(&self.scenario.sim.link, t, false);
        match deliveries.first() {
            Some((arrival, src)) => {
                self.seq += 1;
                self.queue.insert((to_ns(*arrival), self.seq), (drone, *src, Payload::Command(event)));
                self.log(t, drone, "command", String::from(event.name()));
            }
            None => self.log(t, drone, "command_dropped", String::from(event.name())),
        }
    }

    /// Current path ids per drone, in plan order.
    pub fn assignments(&self) -> Vec<(u32, Vec<u32>)> {
        self.drones.iter().map(|d| (d.spec.id, d.exec.mission.as_ref().map(|m| m.ids()).unwrap_or_default())).collect()
    }

    /// Redistributes paths while every drone is on the ground. Progress of
    /// a path moves with it; drones left out of `selections` get nothing.
    pub fn assign(&mut self, selections: &[(u32, Vec<u32>)]) -> Result<(), SimError> {
        if let Some(d) = self.drones.iter().find(|d| !matches!(d.exec.state(), FsmState::Idle | FsmState::Landed)) {
            return Err(invalid(format!("drone {} is {}; paths can only be assigned on the ground", d.spec.id, d.exec.state().as_str())));
        }
        if let Some((id, _)) = selections.iter().find(|(id, _)| self.drone(*id).is_none()) {
            return Err(invalid(format!("no drone {id}")));
        }
        let full: Vec<(u32, Vec<u32>)> = self
            .drones
            .iter()
            .map(|d| (d.spec.id, selections.iter().find(|(id, _)| *id == d.spec.id).map(|(_, p)| p.clone()).unwrap_or_default()))
            .collect();
        let slices = assign_paths(&self.plan, &full)?;
        let mut known = BTreeMap::new();
        for d in &self.drones {
            known.extend(d.exec.progress.paths.iter().map(|(k, v)| (*k, *v)));
        }
        let mut target = Raster::empty(self.target.grid);
        for (d, (_, slice)) in self.drones.iter_mut().zip(slices) {
            for p in &slice.paths {
                target.stamp_polyline(&p.drawing_points(), 0.5 * self.scenario.sim.stroke_width);
            }
            let mut progress = MissionProgress::new(&slice);
            progress.spray_seconds = d.exec.progress.spray_seconds;
            for (id, p) in progress.paths.iter_mut() {
                if let Some(k) = known.get(id) {
                    *p = *k;
                }
            }
            d.exec.load_mission(slice, Some(progress));
        }
        self.target = target;
        Ok(())
    }

    /// Replaces a drone's progress, e.g. after a restart of the service.
    pub fn restore_progress(&mut self, drone: u32, progress: MissionProgress) {
        if let Some(d) = self.drones.iter_mut().find(|d| d.spec.id == drone) {
            d.exec.progress = progress;
        }
    }

    fn run_script(&mut self, t: f64) {
        while let Some(item) = self.scenario.script.get(self.script_idx).copied() {
            if item.t > t + 1e-9 {
                break;
            }
            self.script_idx += 1;
            match item.action {
                ScriptAction::Command(ev) => self.command(item.drone, ev),
                ScriptAction::Draw => {
                    let state = self.drone(item.drone).map(|d| d.exec.state());
                    match state.and_then(crate::fsm::draw_event) {
                        Some(ev) => self.command(item.drone, ev),
                        None => self.log(t, item.drone, "command_ignored", String::from("draw")),
                    }
                }
                ScriptAction::BatteryLow => {
                    let low = self.scenario.sim.battery_low;
                    if let Some(d) = self.drones.iter_mut().find(|d| d.spec.id == item.drone) {
                        d.truth.battery = d.truth.battery.min(low);
                    }
                    self.log(t, item.drone, "script", String::from("battery_low"));
                }
                ScriptAction::Occlude { hidden, duration } => {
                    if let Some(d) = self.drones.iter_mut().find(|d| d.spec.id == item.drone) {
                        d.occlusion = Some((hidden, t + duration));
                    }
                    self.log(t, item.drone, "script", format!("occlude {duration} s"));
                }
            }
        }
    }

    fn deliver(&mut self, t: f64) {
        let now = to_ns(t);
        while let Some((&key, _)) = self.queue.iter().next() {
            if key.0 > now {
                break;
            }
            let (drone, src, payload) = self.queue.remove(&key).expect("key present");
            let Some(k) = self.drones.iter().position(|d| d.spec.id == drone) else { continue };
            match payload {
                Payload::Command(ev) => {
                    self.drones[k].exec.handle(t, ev);
                }
                Payload::Fix(mut fix) => {
                    let d = &mut self.drones[k];
                    let newer = d.exec.last_fix().is_none_or(|f| fix.timestamp > f.timestamp);
                    if !newer {
                        continue;
                    }
                    fix.source = src;
                    d.exec.on_fix(fix);
                    let a = &mut d.acc;
                    match src {
                        LinkSource::Primary => a.fixes_primary += 1,
                        LinkSource::Backup => a.fixes_backup += 1,
                    }
                    if d.exec.state().is_airborne() {
                        if let Some(prev) = a.last_fix_arrival {
                            a.max_fix_gap = a.max_fix_gap.max(t - prev);
                        }
                    }
                    a.last_fix_arrival = Some(t);
                    if a.last_source != Some(src) {
                        a.last_source = Some(src);
                        self.events.push(SimEvent { t, drone, kind: "fix_source", detail: String::from(src.as_str()) });
                    }
                }
            }
        }
    }

    fn sense(&mut self, t: f64, out: &mut StepOutput) {
        let cfg = self.scenario.sim.clone();
        let eps = 1e-9;
        if t + eps >= self.scans as f64 / cfg.lidar_hz {
            self.scans += 1;
            for d in &mut self.drones {
                let scan = render_scan(d.truth.position.z, d.truth.yaw, &cfg.lidar, &mut d.lidar_rng, t);
                let rcfg = RansacConfig { seed: mix(cfg.seed, (d.spec.id as u64) << 32 | d.scans), ..cfg.ransac };
                d.scans += 1;
                match ransac_wall_fit(&scan, &rcfg) {
                    Ok(fit) => d.fit = Some(fit),
                    Err(e) => {
                        d.fit = None;
                        self.events.push(SimEvent { t, drone: d.spec.id, kind: "lidar_fail", detail: format!("{e}") });
                    }
                }
            }
        }
        if t + eps < self.frames as f64 / cfg.camera_hz {
            return;
        }
        self.frames += 1;
        let views: Vec<MarkerView> = self
            .drones
            .iter()
            .map(|d| MarkerView {
                layout: d.spec.layout(),
                position: d.truth.position,
                yaw: d.truth.yaw,
                hidden: match d.occlusion {
                    Some((h, until)) if t < until => h,
                    _ => [false; 3],
                },
            })
            .collect();
        let frame = render_spots(&views, &self.camera_truth, &self.wall, cfg.sigma_px, &mut self.cam_rng, t);
        let beams = track_frame(&frame, &self.layouts, &mut self.track, &self.camera, &cfg.tracker);
        if self.track.lost_events > self.lost_seen {
            self.lost_seen = self.track.lost_events;
            self.log(t, 0, "track_lost", format!("{} total", self.lost_seen));
        }
        for b in beams {
            // ground-truth audit: the beam must pass closest to its own drone
            let Some((own_pos, own_fit)) = self.drones.iter().find(|d| d.spec.id == b.drone_id).map(|d| (d.truth.position, d.fit)) else {
                continue;
            };
            let d_own = b.beam.distance_to(self.wall.to_world(own_pos));
            let d_other = self
                .drones
                .iter()
                .filter(|d| d.spec.id != b.drone_id)
                .map(|d| b.beam.distance_to(self.wall.to_world(d.truth.position)))
                .fold(f64::INFINITY, f64::min);
            if d_other < d_own && d_own > 0.05 {
                self.swaps += 1;
                if let Some(d) = self.drones.iter_mut().find(|d| d.spec.id == b.drone_id) {
                    d.acc.swaps += 1;
                }
                self.log(t, b.drone_id, "identity_swap", format!("beam misses by {d_own:.3} m"));
            }
            let Some(fit) = own_fit else { continue };
            let Ok(fix) = fuse(&b.beam, &fit, &self.wall, b.drone_id, t) else { continue };
            out.fixes.push(fix);
            for (arrival, src) in inject_link_model(&cfg.link, t, true) {
                self.seq += 1;
                self.queue.insert((to_ns(arrival), self.seq), (b.drone_id, src, Payload::Fix(fix)));
            }
        }
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) -> StepOutput {
        let t = self.time();
        let dt = self.dt();
        let cfg = self.scenario.sim.clone();
        let mut out = StepOutput { t, ..StepOutput::default() };
        let first_event = self.events.len();

        self.run_script(t);
        self.deliver(t);
        self.sense(t, &mut out);

        let wind = self.wind.at(t);
        let v_draw = self.scenario.executor.controller.v_draw;
        let setpoint = self.scenario.executor.controller.wall_setpoint;
        for k in 0..self.drones.len() {
            let d = &mut self.drones[k];
            let id = d.spec.id;
            if !d.battery_warned && d.truth.battery <= cfg.battery_low && d.exec.state() != FsmState::BatterySwap {
                d.battery_warned = true;
                d.exec.handle(t, Event::BatteryLow);
                self.events.push(SimEvent { t, drone: id, kind: "battery_low", detail: format!("{:.3}", d.truth.battery) });
            }
            if d.exec.state() == FsmState::BatterySwap {
                d.swap_elapsed += dt;
                if d.swap_elapsed >= cfg.swap_duration - 1e-9 {
                    d.swap_elapsed = 0.0;
                    d.truth.battery = 1.0;
                    d.battery_warned = false;
                    d.exec.handle(t, Event::SwapDone);
                    self.events.push(SimEvent { t, drone: id, kind: "swap_done", detail: format!("{:.2} s", cfg.swap_duration) });
                }
            } else {
                d.swap_elapsed = 0.0;
            }

            let cmd = d.exec.tick(t);
            if d.nozzle.back().map_or(d.truth.spray_on, |c| c.1) != cmd.spray {
                d.nozzle.push_back((t + cfg.actuation_delay, cmd.spray));
            }

            // metrics on the state that produced this command
            if d.exec.state() == FsmState::Drawing {
                if let Some(p) = d.exec.stroke_projection(d.truth.position.xy()) {
                    d.acc.xte.push(p.error.abs());
                    let along = d.truth.velocity.xy().dot(p.tangent);
                    d.acc.speed_dev.push((along - v_draw).abs() / v_draw);
                    d.acc.wall_dev = d.acc.wall_dev.max((d.truth.position.z - setpoint).abs());
                }
            }

            let p0 = d.truth.position;
            if d.exec.state().is_airborne() {
                step_dynamics(&mut d.truth, cmd.velocity, wind, dt, &cfg.plant);
            } else {
                d.truth.velocity = Vec3::ZERO;
            }
            let p1 = d.truth.position;
            if d.exec.state().is_airborne() {
                d.acc.min_wall = Some(d.acc.min_wall.map_or(p1.z, |m| m.min(p1.z)));
            }
            if d.exec.state().is_airborne() && d.exec.state() != FsmState::Drawing {
                d.acc.travel += p0.dist(p1);
            }

            // paint over the tick, split where the nozzle switches
            let mut s0 = 0.0;
            let mut lost = 0.0;
            let mut landed_total = 0.0;
            let mut empty = false;
            loop {
                let next = d.nozzle.front().copied().filter(|c| c.0 < t + dt - 1e-12);
                let s1 = next.map_or(1.0, |c| ((c.0 - t) / dt).clamp(s0, 1.0));
                if d.truth.spray_on && s1 > s0 && d.truth.paint_g > 0.0 {
                    let want = cfg.spray.flow(d.truth.cap) * (s1 - s0) * dt;
                    let mass = want.min(d.truth.paint_g);
                    let a = p0 + (p1 - p0) * s0;
                    let b = p0 + (p1 - p0) * s1;
                    let n = 0.5 * (a.z + b.z);
                    let landed = self.canvas.deposit_segment(a.xy(), b.xy(), n, mass, d.truth.cap, &cfg.spray);
                    d.truth.paint_g -= mass;
                    landed_total += landed;
                    lost += mass - landed;
                    if d.truth.paint_g <= 0.0 {
                        d.truth.paint_g = 0.0;
                        empty = true;
                    }
                }
                match next {
                    Some((_, on)) => {
                        d.nozzle.pop_front();
                        d.truth.spray_on = on;
                        s0 = s1;
                    }
                    None => break,
                }
            }
            let _ = landed_total;
            self.lost_g += lost;
            if empty && !d.paint_warned {
                d.paint_warned = true;
                d.exec.handle(t, Event::PaintEmpty);
                self.events.push(SimEvent { t, drone: id, kind: "paint_empty", detail: String::new() });
            }

            if let Some((_, until)) = d.occlusion {
                if t >= until {
                    d.occlusion = None;
                }
            }
            for e in d.exec.take_log() {
                let (kind, detail) = match e.kind {
                    LogKind::Transition { from, to, event } => ("transition", format!("{} -> {} ({event})", from.as_str(), to.as_str())),
                    LogKind::Ignored { state, event } => ("ignored", format!("{event} in {}", state.as_str())),
                };
                self.events.push(SimEvent { t: e.t, drone: e.drone_id, kind, detail });
            }
            if d.exec.take_dirty() {
                out.progress_changed.push(id);
            }
        }

        self.tick += 1;
        let script_done = self.script_idx >= self.scenario.script.len();
        // a landed drone with a low battery is about to start a swap
        let grounded = self.drones.iter().all(|d| match d.exec.state() {
            FsmState::Idle | FsmState::Fault => true,
            FsmState::Landed => !d.battery_warned,
            _ => false,
        });
        if self.time() >= cfg.max_time || (script_done && grounded && self.tick > 1 && !self.queue.values().any(|q| matches!(q.2, Payload::Command(_)))) {
            self.finished = true;
        }
        out.events = self.events[first_event..].to_vec();
        out
    }

    pub fn run_to_end(&mut self) {
        while !self.finished {
            self.step();
        }
    }

    pub fn report(&self) -> SimReport {
        let cfg = &self.scenario.sim;
        let c = &self.scenario.executor.controller;
        let threshold = cfg.spray.paint_threshold(cfg.canvas_cell, c.v_draw, c.wall_setpoint);
        let painted = self.canvas.threshold(threshold);
        let sc = score(&painted, &self.target);
        let stats = |v: &[f64]| -> (f64, f64, f64) {
            if v.is_empty() {
                return (0.0, 0.0, 0.0);
            }
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (mean, percentile(v, 0.95), v.iter().copied().fold(0.0, f64::max))
        };
        let mut all_xte = Vec::new();
        let mut all_speed = Vec::new();
        let mut drones = Vec::new();
        let mut travel = 0.0;
        let mut completed = true;
        for d in &self.drones {
            all_xte.extend_from_slice(&d.acc.xte);
            all_speed.extend_from_slice(&d.acc.speed_dev);
            travel += d.acc.travel;
            let (xm, xp, xx) = stats(&d.acc.xte);
            let (sm, _, sx) = stats(&d.acc.speed_dev);
            let assigned = d.exec.mission.as_ref().map_or(0, |m| m.paths.len());
            let done = d.exec.progress.paths.values().filter(|p| p.done).count();
            if done < assigned || !matches!(d.exec.state(), FsmState::Landed | FsmState::Idle) {
                completed = false;
            }
            drones.push(DroneMetrics {
                id: d.spec.id,
                final_state: d.exec.state(),
                paths_assigned: assigned,
                paths_done: done,
                cross_track_mean_m: xm,
                cross_track_p95_m: xp,
                cross_track_max_m: xx,
                speed_dev_mean: sm,
                speed_dev_max: sx,
                wall_dev_max_m: d.acc.wall_dev,
                wall_min_m: d.acc.min_wall.unwrap_or(d.truth.position.z),
                travel_m: d.acc.travel,
                spray_s: d.exec.progress.spray_seconds,
                paint_used_g: cfg.paint_capacity_g - d.truth.paint_g,
                battery: d.truth.battery,
                fixes_primary: d.acc.fixes_primary,
                fixes_backup: d.acc.fixes_backup,
                max_fix_gap_s: d.acc.max_fix_gap,
                identity_swaps: d.acc.swaps,
            });
        }
        let (xm, xp, xx) = stats(&all_xte);
        let (sm, _, sx) = stats(&all_speed);
        let remaining: f64 = self.drones.iter().map(|d| d.truth.paint_g).sum();
        let on_canvas = self.canvas.total();
        let balance = (on_canvas + remaining + self.lost_g - self.initial_g).abs() / self.initial_g;
        let metrics = Metrics {
            sim_time_s: self.time(),
            ticks: self.tick,
            completed,
            score: sc,
            cross_track_mean_m: xm,
            cross_track_p95_m: xp,
            cross_track_max_m: xx,
            speed_dev_mean: sm,
            speed_dev_max: sx,
            wall_dev_max_m: self.drones.iter().map(|d| d.acc.wall_dev).fold(0.0, f64::max),
            travel_m: travel,
            identity_swaps: self.swaps,
            paint_initial_g: self.initial_g,
            paint_remaining_g: remaining,
            paint_canvas_g: on_canvas,
            paint_lost_g: self.lost_g,
            mass_balance_rel_err: balance,
            calibration_rms_px: self.calibration_rms_px,
            drones,
        };
        SimReport {
            canvas: self.canvas.clone(),
            target: self.target.clone(),
            painted,
            paint_threshold: threshold,
            metrics,
            events: self.events.clone(),
            progress: self.drones.iter().map(|d| (d.spec.id, d.exec.progress.clone())).collect(),
        }
    }
}

/// Runs a scenario to completion.
pub fn run(scenario: Scenario, plan: MissionPlan) -> Result<SimReport, SimError> {
    let mut sim = Sim::new(scenario, plan)?;
    sim.run_to_end();
    Ok(sim.report())
}

#[cfg(test)]
mod tests;
