//! On-board mission executor: drives the state machine from fixes, events
//! and time, and turns the active stroke into velocity and spray commands.

use alloc::vec;
use alloc::vec::Vec;

use crate::compiler::{MissionPlan, PaintPath, PathKind};
use crate::control::{control_step, goto_step, ControllerConfig, Mode, TrackedPath};
use crate::fsm::{fsm_step, spray_command, Action, Event, Fsm, FsmContext, FsmState, Step};
use crate::lidar::NavFix;
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{Vec2, Vec3};
use crate::progress::MissionProgress;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutorConfig {
    pub controller: ControllerConfig,
    /// Landing pad in wall coordinates (u, v, n).
    pub home: Vec3,
    /// Takeoff climbs this far above the pad before navigating, m.
    pub takeoff_climb: f64,
    /// Waypoint arrival radius, m.
    pub arrive_tol: f64,
    /// Battery swaps longer than this fault the drone, s.
    pub swap_limit: f64,
    /// Lead-in length for resumed strokes, m.
    pub resume_lead_in: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            controller: ControllerConfig::default(),
            home: Vec3::new(0.0, 0.0, 1.0),
            takeoff_climb: 1.0,
            arrive_tol: 0.02,
            swap_limit: 10.0,
            resume_lead_in: 0.30,
        }
    }
}

/// Strokes whose remainder is shorter than this are considered finished.
const MIN_REMAINDER: f64 = 1e-3;
/// Lead-out end detection slack, m.
const END_SLACK: f64 = 5e-3;
/// Minimum straight run flown after an aborted stroke, m.
const MIN_ABORT_RUN: f64 = 0.05;

/// The stroke being flown.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    pub path_id: u32,
    /// Flown geometry: the plan path, a resumed remainder, or the straight
    /// run after an abort.
    pub tracked: TrackedPath,
    /// Drawing length already painted before this geometry starts.
    pub base: f64,
    pub hint: f64,
    pub abort_run: bool,
}

impl Stroke {
    fn completed_at(&self, arc_s: f64) -> f64 {
        let d0 = self.tracked.drawing_start();
        let d1 = self.tracked.drawing_end();
        self.base + (arc_s.min(d1) - d0).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogKind {
    Transition { from: FsmState, to: FsmState, event: &'static str },
    Ignored { state: FsmState, event: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub t: f64,
    pub drone_id: u32,
    pub kind: LogKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Command {
    pub velocity: Vec3,
    pub spray: bool,
}

#[derive(Debug, Clone)]
pub struct Executor {
    pub drone_id: u32,
    pub cfg: ExecutorConfig,
    pub fsm: Fsm,
    pub mission: Option<MissionPlan>,
    pub progress: MissionProgress,
    stroke: Option<Stroke>,
    approach: Option<(TrackedPath, Vec3)>,
    hold: Option<Vec3>,
    fix: Option<NavFix>,
    fix_prev: Option<NavFix>,
    fix_lost: bool,
    swap_started: Option<f64>,
    battery_low: bool,
    /// Paint keeps flowing for the actuation delay after the nozzle is
    /// told to close; the stroke keeps being measured until then.
    trail: Option<(Stroke, f64)>,
    spray: bool,
    last_tick: Option<f64>,
    dirty: bool,
    log: Vec<LogEntry>,
}

impl Executor {
    pub fn new(drone_id: u32, cfg: ExecutorConfig) -> Self {
        Executor {
            drone_id,
            cfg,
            fsm: Fsm::new(),
            mission: None,
            progress: MissionProgress::default(),
            stroke: None,
            approach: None,
            hold: None,
            fix: None,
            fix_prev: None,
            fix_lost: false,
            swap_started: None,
            battery_low: false,
            trail: None,
            spray: false,
            last_tick: None,
            dirty: false,
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> FsmState {
        self.fsm.state
    }

    pub fn stroke(&self) -> Option<&Stroke> {
        self.stroke.as_ref()
    }

    pub fn spray_on(&self) -> bool {
        self.spray
    }

    pub fn last_fix(&self) -> Option<&NavFix> {
        self.fix.as_ref()
    }

    /// Installs a mission slice, optionally with stored progress.
    pub fn load_mission(&mut self, plan: MissionPlan, progress: Option<MissionProgress>) {
        self.progress = progress.unwrap_or_else(|| MissionProgress::new(&plan));
        self.mission = Some(plan);
        self.stroke = None;
        self.approach = None;
        self.dirty = true;
    }

    pub fn on_fix(&mut self, fix: NavFix) {
        match &self.fix {
            Some(f) if fix.timestamp <= f.timestamp => {}
            _ => {
                self.fix_prev = self.fix.take();
                self.fix = Some(fix);
            }
        }
    }

    /// True once after every transition or progress change.
    pub fn take_dirty(&mut self) -> bool {
        core::mem::replace(&mut self.dirty, false)
    }

    pub fn take_log(&mut self) -> Vec<LogEntry> {
        core::mem::take(&mut self.log)
    }

    fn context(&self) -> FsmContext {
        let (pending_other, current_unfinished) = match &self.mission {
            Some(plan) => {
                let cur = self.progress.current.filter(|id| !self.progress.get(*id).done);
                let pending = self.progress.pending_count(plan);
                (pending - usize::from(cur.is_some()), cur.is_some())
            }
            None => (0, false),
        };
        let stroke_remaining_s = match (&self.stroke, self.fix) {
            (Some(s), Some(f)) if !s.abort_run => {
                let p = s.tracked.project(f.position.xy(), s.hint);
                (s.tracked.drawing_end() - p.arc_s).max(0.0) / self.cfg.controller.v_draw
            }
            _ => f64::INFINITY,
        };
        FsmContext { pending_other, current_unfinished, stroke_remaining_s }
    }

    /// Feeds one event to the state machine and carries out its actions.
    pub fn handle(&mut self, now: f64, event: Event) -> Step {
        match event {
            Event::BatteryLow => self.battery_low = true,
            Event::SwapDone => {
                self.battery_low = false;
                self.swap_started = None;
            }
            _ => {}
        }
        let ctx = self.context();
        let step = fsm_step(&mut self.fsm, &event, &ctx);
        let kind = if step.handled {
            if step.from == step.to {
                None
            } else {
                Some(LogKind::Transition { from: step.from, to: step.to, event: event.name() })
            }
        } else {
            Some(LogKind::Ignored { state: step.from, event: event.name() })
        };
        if let Some(kind) = kind {
            self.log.push(LogEntry { t: now, drone_id: self.drone_id, kind });
        }
        for a in step.actions.clone() {
            self.apply(now, a, step.to);
        }
        if step.to == FsmState::Takeoff || step.to == FsmState::Landing {
            self.stroke = None;
            self.approach = None;
        }
        if step.to != FsmState::Paused {
            self.hold = None;
        }
        step
    }

    fn position(&self) -> Option<Vec3> {
        self.fix.map(|f| f.position)
    }

    fn apply(&mut self, now: f64, action: Action, to: FsmState) {
        match action {
            Action::SprayOff => self.spray = false,
            Action::AbortStroke => {
                if let Some(s) = self.stroke.take() {
                    if !s.abort_run {
                        self.record_stroke(&s);
                        let until = now + self.cfg.controller.spray_delay;
                        if to == FsmState::LeadOut {
                            self.stroke = Some(self.abort_run(&s));
                        }
                        self.trail = Some((s, until));
                    }
                }
            }
            Action::MarkPathDone => {
                if let (Some(id), Some(plan)) = (self.progress.current, &self.mission) {
                    if let Some(p) = plan.path(id) {
                        self.progress.mark_done(id, p.drawing_len());
                    }
                }
                self.stroke = None;
                self.dirty = true;
            }
            Action::SelectNextPath => self.select_next_path(),
            Action::Hold(target) => self.hold = target.or(self.position()),
            Action::StartSwapTimer => self.swap_started = Some(now),
            Action::ClearMission => {
                self.mission = None;
                self.progress = MissionProgress::default();
                self.stroke = None;
                self.approach = None;
                self.trail = None;
                self.battery_low = false;
                self.swap_started = None;
            }
            Action::PersistProgress => self.dirty = true,
        }
    }

    /// Straight continuation along the stroke tangent, flown with the
    /// nozzle closed.
    fn abort_run(&self, s: &Stroke) -> Stroke {
        let pos = self.position().map(|p| p.xy()).unwrap_or_else(|| s.tracked.sample(s.hint).0);
        let (_, t) = s.tracked.sample(s.hint);
        let len = s.tracked.path.lead_out_len.max(MIN_ABORT_RUN);
        let path = PaintPath { id: s.path_id, kind: PathKind::Outline, points: vec![pos, pos + t * len], lead_in_len: 0.0, lead_out_len: len };
        Stroke { path_id: s.path_id, tracked: TrackedPath::new(path), base: 0.0, hint: 0.0, abort_run: true }
    }

    fn record_stroke(&mut self, s: &Stroke) {
        if s.abort_run {
            return;
        }
        if let Some(f) = self.fix {
            let p = s.tracked.project(f.position.xy(), s.hint);
            let before = self.progress.get(s.path_id).completed;
            let completed = s.completed_at(p.arc_s);
            let limit = self.mission.as_ref().and_then(|m| m.path(s.path_id)).map(|p| p.drawing_len()).unwrap_or(completed);
            self.progress.advance(s.path_id, completed.min(limit));
            if self.progress.get(s.path_id).completed != before {
                self.dirty = true;
            }
        }
    }

    fn select_next_path(&mut self) {
        self.stroke = None;
        self.approach = None;
        let Some(plan) = &self.mission else { return };
        let mut chosen = None;
        for p in &plan.paths {
            let pr = self.progress.get(p.id);
            if pr.done {
                continue;
            }
            if p.drawing_len() - pr.completed < MIN_REMAINDER {
                self.progress.mark_done(p.id, p.drawing_len());
                self.dirty = true;
                continue;
            }
            chosen = Some((p.clone(), pr.completed));
            break;
        }
        let Some((path, completed)) = chosen else {
            self.progress.current = None;
            return;
        };
        self.progress.current = Some(path.id);
        let flown = if completed > 0.0 { path.resume_from(completed, self.cfg.resume_lead_in) } else { path };
        let tracked = TrackedPath::new(flown);
        let start = tracked.sample(0.0).0;
        let target = Vec3::new(start.x, start.y, self.cfg.controller.wall_setpoint);
        let from = self.position().map(|p| p.xy()).unwrap_or(start);
        let approach = PaintPath {
            id: tracked.path.id,
            kind: PathKind::Outline,
            points: vec![from, start],
            lead_in_len: 0.0,
            lead_out_len: 0.0,
        };
        self.approach = Some((TrackedPath::new(approach), target));
        self.stroke = Some(Stroke { path_id: tracked.path.id, tracked, base: completed, hint: 0.0, abort_run: false });
    }

    fn takeoff_target(&self) -> Vec3 {
        self.cfg.home + Vec3::new(0.0, self.cfg.takeoff_climb, 0.0)
    }

    /// Position-driven progress through the current state.
    fn internal_event(&mut self, pos: Vec3) -> Option<Event> {
        let tol = self.cfg.arrive_tol;
        match self.fsm.state {
            FsmState::Takeoff if pos.dist(self.takeoff_target()) < tol => Some(Event::TakeoffDone),
            FsmState::Landing if pos.dist(self.cfg.home) < tol => Some(Event::Touchdown),
            FsmState::NavigateToPath => match &self.approach {
                Some((_, target)) if pos.dist(*target) < tol => Some(Event::Arrived),
                None => Some(Event::CmdLand),
                _ => None,
            },
            FsmState::LeadIn | FsmState::Drawing | FsmState::LeadOut => {
                let s = self.stroke.as_mut()?;
                let p = s.tracked.project(pos.xy(), s.hint);
                s.hint = p.arc_s;
                match self.fsm.state {
                    FsmState::LeadIn if p.arc_s >= s.tracked.drawing_start() => Some(Event::LeadInDone),
                    FsmState::Drawing if p.arc_s >= s.tracked.drawing_end() => Some(Event::DrawingDone),
                    FsmState::LeadOut if p.arc_s >= s.tracked.length() - END_SLACK => Some(Event::PathDone),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Advances the executor to time `now` and returns the actuator command.
    pub fn tick(&mut self, now: f64) -> Command {
        let dt = self.last_tick.map(|t| (now - t).max(0.0)).unwrap_or(0.0);
        self.last_tick = Some(now);
        if self.spray {
            self.progress.spray_seconds += dt;
        }

        if let Some(t0) = self.swap_started {
            if self.fsm.state == FsmState::BatterySwap && now - t0 > self.cfg.swap_limit {
                self.swap_started = None;
                self.handle(now, Event::SwapTimeout);
            }
        }
        if self.fsm.state == FsmState::Landed && self.battery_low {
            self.handle(now, Event::BatteryLow);
        }

        let fresh = matches!(self.fix, Some(f) if now - f.timestamp <= self.cfg.controller.fix_timeout);
        if self.fsm.state.is_airborne() {
            if !fresh && !self.fix_lost {
                self.fix_lost = true;
                self.handle(now, Event::FixTimeout);
            } else if fresh && self.fix_lost {
                self.fix_lost = false;
                self.handle(now, Event::FixOk);
            }
        } else {
            self.fix_lost = false;
        }

        if fresh {
            let pos = self.fix.map(|f| f.position).unwrap_or(Vec3::ZERO);
            // a transition can complete the next state at once (an empty
            // lead-in, for example); a few rounds settle it
            for _ in 0..4 {
                match self.internal_event(pos) {
                    Some(ev) => {
                        self.handle(now, ev);
                    }
                    None => break,
                }
            }
        }

        if let Some((s, until)) = self.trail.take() {
            if now <= until + 1e-9 {
                self.record_stroke(&s);
                self.trail = Some((s, until));
            }
        }

        let velocity = if fresh && self.fsm.state.is_airborne() { self.velocity(now) } else { Vec3::ZERO };

        let mut spray = false;
        if let (Some(s), Some(f)) = (&self.stroke, self.fix) {
            if fresh && self.fsm.spray_permitted() && !s.abort_run {
                let p = s.tracked.project(f.position.xy(), s.hint);
                let c = &self.cfg.controller;
                spray = spray_command(&self.fsm, p.arc_s, s.tracked.drawing_start(), s.tracked.drawing_end(), c.spray_delay, c.v_draw);
            }
        }
        if spray {
            if let Some(s) = self.stroke.clone() {
                self.record_stroke(&s);
            }
        } else if self.spray {
            // nozzle closing: keep measuring the paint still in flight
            if let Some(s) = self.stroke.clone() {
                if !s.abort_run {
                    self.trail = Some((s, now + self.cfg.controller.spray_delay));
                }
            }
        }
        self.spray = spray;
        Command { velocity, spray }
    }

    fn velocity(&mut self, now: f64) -> Vec3 {
        let Some(fix) = self.fix else { return Vec3::ZERO };
        let c = self.cfg.controller;
        let pos = fix.position;
        match self.fsm.state {
            FsmState::Takeoff => goto_step(pos, self.takeoff_target(), &c),
            FsmState::Landing => goto_step(pos, self.cfg.home, &c),
            FsmState::Paused => match self.hold {
                Some(h) => goto_step(pos, h, &c),
                None => Vec3::ZERO,
            },
            FsmState::NavigateToPath => match &self.approach {
                Some((path, _)) if path.length() > 1e-3 => {
                    let a = path.path.points[0];
                    let hint = (pos.xy() - a).dot(path.sample(0.0).1).clamp(0.0, path.length());
                    match control_step(now, &fix, self.fix_prev.as_ref(), path, hint, &c, Mode::Travel) {
                        Ok(out) => out.velocity,
                        Err(_) => Vec3::ZERO,
                    }
                }
                Some((_, target)) => goto_step(pos, *target, &c),
                None => Vec3::ZERO,
            },
            FsmState::LeadIn | FsmState::Drawing | FsmState::LeadOut => match &mut self.stroke {
                Some(s) => match control_step(now, &fix, self.fix_prev.as_ref(), &s.tracked, s.hint, &c, Mode::Drawing) {
                    Ok(out) => {
                        s.hint = out.projection.arc_s;
                        out.velocity
                    }
                    Err(_) => Vec3::ZERO,
                },
                None => Vec3::ZERO,
            },
            _ => Vec3::ZERO,
        }
    }

    /// Projection of a wall point onto the stroke being flown.
    pub fn stroke_projection(&self, pos: Vec2) -> Option<crate::control::Projection> {
        self.stroke.as_ref().map(|s| s.tracked.project(pos, s.hint))
    }
}

#[cfg(test)]
mod tests;
