//! Per-drone mission state machine.
//!
//! `fsm_step` is a pure transition function: it reads the machine, one
//! event and a small summary of the mission, and returns the actions the
//! executor has to carry out. It never touches progress itself.

use alloc::vec::Vec;

use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FsmState {
    Idle,
    Takeoff,
    NavigateToPath,
    LeadIn,
    Drawing,
    LeadOut,
    Landing,
    Landed,
    BatterySwap,
    Paused,
    Fault,
}

impl FsmState {
    pub const ALL: [FsmState; 11] = [
        FsmState::Idle,
        FsmState::Takeoff,
        FsmState::NavigateToPath,
        FsmState::LeadIn,
        FsmState::Drawing,
        FsmState::LeadOut,
        FsmState::Landing,
        FsmState::Landed,
        FsmState::BatterySwap,
        FsmState::Paused,
        FsmState::Fault,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FsmState::Idle => "Idle",
            FsmState::Takeoff => "Takeoff",
            FsmState::NavigateToPath => "NavigateToPath",
            FsmState::LeadIn => "LeadIn",
            FsmState::Drawing => "Drawing",
            FsmState::LeadOut => "LeadOut",
            FsmState::Landing => "Landing",
            FsmState::Landed => "Landed",
            FsmState::BatterySwap => "BatterySwap",
            FsmState::Paused => "Paused",
            FsmState::Fault => "Fault",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FsmState::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn is_airborne(self) -> bool {
        matches!(
            self,
            FsmState::Takeoff
                | FsmState::NavigateToPath
                | FsmState::LeadIn
                | FsmState::Drawing
                | FsmState::LeadOut
                | FsmState::Landing
                | FsmState::Paused
        )
    }

    /// States that follow a paint path.
    pub fn on_stroke(self) -> bool {
        matches!(self, FsmState::LeadIn | FsmState::Drawing | FsmState::LeadOut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    FixOk,
    FixTimeout,
    /// Lead-out finished.
    PathDone,
    BatteryLow,
    PaintEmpty,
    CmdTakeoff,
    CmdLand,
    CmdPause,
    CmdResume,
    CmdGoto(Vec3),
    SwapDone,
    SwapTimeout,
    TakeoffDone,
    /// Reached the start of the next path's lead-in.
    Arrived,
    LeadInDone,
    DrawingDone,
    Touchdown,
    CmdReboot,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::FixOk => "fix_ok",
            Event::FixTimeout => "fix_timeout",
            Event::PathDone => "path_done",
            Event::BatteryLow => "battery_low",
            Event::PaintEmpty => "paint_empty",
            Event::CmdTakeoff => "cmd_takeoff",
            Event::CmdLand => "cmd_land",
            Event::CmdPause => "cmd_pause",
            Event::CmdResume => "cmd_resume",
            Event::CmdGoto(_) => "cmd_goto",
            Event::SwapDone => "swap_done",
            Event::SwapTimeout => "swap_timeout",
            Event::TakeoffDone => "takeoff_done",
            Event::Arrived => "arrived",
            Event::LeadInDone => "lead_in_done",
            Event::DrawingDone => "drawing_done",
            Event::Touchdown => "touchdown",
            Event::CmdReboot => "cmd_reboot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    SprayOff,
    /// Stop painting the current stroke and keep its partial arc length.
    AbortStroke,
    MarkPathDone,
    /// Pick the next pending path and plan the approach to it.
    SelectNextPath,
    /// Hover at the given point, or where the drone is.
    Hold(Option<Vec3>),
    StartSwapTimer,
    ClearMission,
    PersistProgress,
}

/// Mission facts the transition function needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmContext {
    /// Paths not done, not counting the current one.
    pub pending_other: usize,
    /// The current path exists and is not done.
    pub current_unfinished: bool,
    /// Drawing time left on the current stroke, s.
    pub stroke_remaining_s: f64,
}

impl FsmContext {
    pub fn has_work(&self) -> bool {
        self.pending_other > 0 || self.current_unfinished
    }
}

/// Drawing time below which a battery warning lets the stroke finish.
pub const FINISH_GRACE_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fsm {
    pub state: FsmState,
    /// Lead-out flown after an aborted stroke: spray stays off.
    pub aborting: bool,
    /// Land once the current stroke is finished.
    pub land_after_stroke: bool,
    /// Paused by a fix timeout rather than by the operator.
    pub auto_paused: bool,
    /// Where a pause resumes.
    pub resume_to: FsmState,
}

impl Default for Fsm {
    fn default() -> Self {
        Fsm::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub from: FsmState,
    pub to: FsmState,
    pub actions: Vec<Action>,
    /// False when the event means nothing in this state.
    pub handled: bool,
}

impl Fsm {
    pub const fn new() -> Self {
        Fsm {
            state: FsmState::Idle,
            aborting: false,
            land_after_stroke: false,
            auto_paused: false,
            resume_to: FsmState::NavigateToPath,
        }
    }

    /// Spray may be commanded at all. The trigger window inside these
    /// states is decided by the spray schedule.
    pub fn spray_permitted(&self) -> bool {
        self.state.on_stroke() && !self.aborting
    }
}

/// Spray command for a machine at arc position `arc_s` of its path. The
/// schedule only applies inside the arc interval of the current state, so
/// a lead-in can open the nozzle only in its trigger window.
pub fn spray_command(fsm: &Fsm, arc_s: f64, drawing_start: f64, drawing_end: f64, delay: f64, v_draw: f64) -> bool {
    if !fsm.spray_permitted() {
        return false;
    }
    let in_state = match fsm.state {
        FsmState::LeadIn => arc_s < drawing_start,
        FsmState::LeadOut => arc_s >= drawing_end,
        _ => true,
    };
    in_state && crate::control::spray_schedule(arc_s, drawing_start, drawing_end, delay, v_draw)
}

/// The operator's manual drawing start: take off from the ground, resume
/// from a pause. Other states ignore it.
pub fn draw_event(state: FsmState) -> Option<Event> {
    match state {
        FsmState::Idle | FsmState::Landed => Some(Event::CmdTakeoff),
        FsmState::Paused => Some(Event::CmdResume),
        _ => None,
    }
}

fn after_path(ctx: &FsmContext, land: bool) -> FsmState {
    if !land && ctx.pending_other > 0 {
        FsmState::NavigateToPath
    } else {
        FsmState::Landing
    }
}

/// Advances the machine by one event.
pub fn fsm_step(fsm: &mut Fsm, event: &Event, ctx: &FsmContext) -> Step {
    use Action::*;
    use Event::*;
    use FsmState::*;
    let from = fsm.state;
    let mut actions = Vec::new();
    let mut handled = true;
    let mut to = from;

    // Interrupting a stroke or an approach: what to do now and where a
    // later resume goes.
    let interrupt = |fsm: &Fsm, actions: &mut Vec<Action>| -> FsmState {
        match fsm.state {
            LeadIn | Drawing => {
                actions.push(SprayOff);
                actions.push(AbortStroke);
                if fsm.land_after_stroke { Landing } else { NavigateToPath }
            }
            LeadOut if fsm.aborting => Landing,
            LeadOut => {
                actions.push(MarkPathDone);
                if fsm.land_after_stroke { Landing } else { NavigateToPath }
            }
            Paused => fsm.resume_to,
            s => s,
        }
    };

    match (from, *event) {
        (Idle | Landed, CmdTakeoff) => to = Takeoff,
        (Takeoff, TakeoffDone) => {
            to = if ctx.has_work() { NavigateToPath } else { Landing };
            if to == NavigateToPath {
                actions.push(SelectNextPath);
            }
        }
        (NavigateToPath, Arrived) => to = LeadIn,
        (LeadIn, LeadInDone) => to = Drawing,
        (Drawing, DrawingDone) => to = LeadOut,
        (LeadOut, PathDone) => {
            if fsm.aborting {
                to = Landing;
            } else {
                actions.push(MarkPathDone);
                to = after_path(ctx, fsm.land_after_stroke);
                if to == NavigateToPath {
                    actions.push(SelectNextPath);
                }
            }
        }
        (Landing, Touchdown) => to = Landed,

        (LeadIn | Drawing, CmdLand) => {
            actions.push(SprayOff);
            actions.push(AbortStroke);
            to = LeadOut;
            fsm.aborting = true;
        }
        (LeadOut, CmdLand) => fsm.land_after_stroke = true,
        (Takeoff | NavigateToPath | Paused, CmdLand) => {
            actions.push(SprayOff);
            to = Landing;
        }

        (Drawing, BatteryLow) if ctx.stroke_remaining_s < FINISH_GRACE_S => fsm.land_after_stroke = true,
        (LeadIn | Drawing, BatteryLow | PaintEmpty) => {
            actions.push(SprayOff);
            actions.push(AbortStroke);
            to = LeadOut;
            fsm.aborting = true;
        }
        (LeadOut, BatteryLow | PaintEmpty) => fsm.land_after_stroke = true,
        (Takeoff | NavigateToPath | Paused, BatteryLow | PaintEmpty) => {
            actions.push(SprayOff);
            to = Landing;
        }
        (Landing, BatteryLow | PaintEmpty) => {}

        (Takeoff | NavigateToPath | LeadIn | Drawing | LeadOut | Landing, CmdPause | CmdGoto(_)) => {
            fsm.resume_to = interrupt(fsm, &mut actions);
            let target = if let CmdGoto(p) = *event { Some(p) } else { None };
            actions.push(Hold(target));
            to = Paused;
        }
        (Paused, CmdPause) => fsm.auto_paused = false,
        (Paused, CmdGoto(p)) => {
            fsm.auto_paused = false;
            actions.push(Hold(Some(p)));
        }
        (Paused, CmdResume) => {
            to = fsm.resume_to;
            if to == NavigateToPath && !ctx.has_work() {
                to = Landing;
            }
            if to == NavigateToPath {
                actions.push(SelectNextPath);
            }
        }
        (Takeoff | NavigateToPath | LeadIn | Drawing | LeadOut | Landing, FixTimeout) => {
            fsm.resume_to = interrupt(fsm, &mut actions);
            actions.push(Hold(None));
            fsm.auto_paused = true;
            to = Paused;
        }
        (Paused, FixTimeout) => {}
        (Paused, FixOk) if fsm.auto_paused => {
            to = fsm.resume_to;
            if to == NavigateToPath && !ctx.has_work() {
                to = Landing;
            }
            if to == NavigateToPath {
                actions.push(SelectNextPath);
            }
        }
        (_, FixOk) => {}

        (Landed, BatteryLow) => {
            to = BatterySwap;
            actions.push(StartSwapTimer);
        }
        (BatterySwap, SwapDone) => to = if ctx.has_work() { Takeoff } else { Landed },
        (BatterySwap, SwapTimeout) => {
            to = Fault;
            actions.push(SprayOff);
        }
        (Fault | Idle | Landed, CmdReboot) => {
            to = Idle;
            actions.push(ClearMission);
        }

        _ => handled = false,
    }

    if to != from {
        if from == LeadOut || to == Landing || to == Landed || to == Idle {
            fsm.aborting = false;
        }
        if to == Landed || to == Idle {
            fsm.land_after_stroke = false;
        }
        if from == Paused {
            fsm.auto_paused = false;
        }
        fsm.state = to;
        actions.push(PersistProgress);
    }
    Step { from, to, actions, handled }
}
