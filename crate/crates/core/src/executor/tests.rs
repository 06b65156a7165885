use super::*;
use crate::compiler::CompileParams;
use crate::lidar::LinkSource;
use alloc::vec::Vec;

const DT: f64 = 0.02;

fn straight(id: u32, v: f64) -> PaintPath {
    PaintPath {
        id,
        kind: PathKind::Outline,
        points: vec![Vec2::new(0.5, v), Vec2::new(2.5, v)],
        lead_in_len: 0.3,
        lead_out_len: 0.3,
    }
}

fn plan() -> MissionPlan {
    MissionPlan { paths: vec![straight(1, 1.0), straight(2, 1.2)], wall_extent: (3.0, 2.0), params: CompileParams::default() }
}

/// Ideal plant: the drone moves exactly at the commanded velocity and every
/// tick yields a perfect fix.
struct Rig {
    ex: Executor,
    pos: Vec3,
    t: f64,
    fixes: bool,
    spray_log: Vec<(f64, FsmState, bool, Vec3)>,
}

impl Rig {
    fn new() -> Self {
        // an ideal velocity plant with a one-tick delay goes unstable once
        // kd exceeds 1, so the rig uses light damping
        let mut cfg = ExecutorConfig::default();
        cfg.controller.kd_n = 0.2;
        cfg.controller.kd_w = 0.2;
        let mut ex = Executor::new(7, cfg);
        ex.load_mission(plan(), None);
        let pos = ex.cfg.home;
        let mut r = Rig { ex, pos, t: 0.0, fixes: true, spray_log: Vec::new() };
        r.feed();
        r
    }

    fn feed(&mut self) {
        if self.fixes {
            self.ex.on_fix(NavFix { drone_id: 7, timestamp: self.t, position: self.pos, yaw: 0.0, source: LinkSource::Primary, quality: 1.0 });
        }
    }

    fn step(&mut self) -> Command {
        let cmd = self.ex.tick(self.t);
        self.spray_log.push((self.t, self.ex.state(), cmd.spray, self.pos));
        if self.ex.state().is_airborne() {
            self.pos = self.pos + cmd.velocity * DT;
        }
        self.t += DT;
        self.feed();
        cmd
    }

    fn run_until(&mut self, limit: f64, mut stop: impl FnMut(&Rig) -> bool) -> bool {
        while self.t < limit {
            if stop(self) {
                return true;
            }
            self.step();
        }
        stop(self)
    }
}

#[test]
fn full_mission_paints_every_path_and_lands() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    assert!(r.run_until(120.0, |r| r.ex.state() == FsmState::Landed));
    assert!(r.ex.progress.paths.values().all(|p| p.done));
    assert!((r.ex.progress.get(1).completed - 1.4).abs() < 1e-9);
    // with a perfect plant the nozzle opens 7.5 cm before the drawing start
    // and closes 7.5 cm before its end
    for w in r.spray_log.windows(2) {
        let (_, _, was, _) = w[0];
        let (_, st, on, p) = w[1];
        if on && !was {
            assert_eq!(st, FsmState::LeadIn);
            assert!((p.x - (0.8 - 0.075)).abs() < 0.011, "opened at u = {}", p.x);
        }
        if was && !on {
            assert!((p.x - (2.2 - 0.075)).abs() < 0.011, "closed at u = {}", p.x);
        }
        if on {
            assert!(matches!(st, FsmState::LeadIn | FsmState::Drawing));
        }
    }
    assert!(r.ex.progress.spray_seconds > 5.0 && r.ex.progress.spray_seconds < 6.0);
    let names: Vec<&str> = r
        .ex
        .take_log()
        .iter()
        .filter_map(|e| match e.kind {
            LogKind::Transition { to, .. } => Some(to.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(
        names,
        [
            "Takeoff", "NavigateToPath", "LeadIn", "Drawing", "LeadOut", "NavigateToPath", "LeadIn", "Drawing", "LeadOut",
            "Landing", "Landed"
        ]
    );
}

#[test]
fn drawing_speed_is_constant_on_the_line() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    r.run_until(60.0, |r| r.ex.state() == FsmState::Drawing);
    for _ in 0..40 {
        let c = r.step();
        // tangential component exactly v_draw, lateral correction small
        assert!((c.velocity.x - 0.5).abs() < 1e-12 && c.velocity.y.abs() < 1e-3, "{:?}", c.velocity);
    }
}

#[test]
fn landing_mid_stroke_keeps_partial_progress() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    // 40% into the first drawing portion
    r.run_until(60.0, |r| r.ex.state() == FsmState::Drawing && r.pos.x >= 0.8 + 0.56);
    let u_off = r.pos.x;
    r.ex.handle(r.t, Event::CmdLand);
    assert_eq!(r.ex.state(), FsmState::LeadOut);
    assert!(!r.step().spray);
    assert!(r.run_until(60.0, |r| r.ex.state() == FsmState::Landed));
    let p = r.ex.progress.get(1);
    assert!(!p.done);
    // paint in flight for the delay after closing: 0.15 s at 0.5 m/s
    let expect = u_off - 0.8 + 0.075;
    assert!((p.completed - expect).abs() < 0.011, "completed {} expected {}", p.completed, expect);
    assert!(r.spray_log.iter().filter(|e| e.1 == FsmState::LeadOut).all(|e| !e.2));
}

#[test]
fn resume_after_battery_swap_completes_the_stroke() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    // 2.4 s of drawing left: more than the grace period
    r.run_until(60.0, |r| r.ex.state() == FsmState::Drawing && r.pos.x >= 1.0);
    r.ex.handle(r.t, Event::BatteryLow);
    assert_eq!(r.ex.state(), FsmState::LeadOut);
    assert!(r.run_until(60.0, |r| r.ex.state() == FsmState::BatterySwap));
    let partial = r.ex.progress.get(1).completed;
    let swap_start = r.t;
    r.run_until(swap_start + 8.0, |_| false);
    assert_eq!(r.ex.state(), FsmState::BatterySwap);
    r.ex.handle(r.t, Event::SwapDone);
    assert_eq!(r.ex.state(), FsmState::Takeoff);
    // the resumed stroke re-enters at the stored arc position
    r.run_until(60.0 + r.t, |r| r.ex.state() == FsmState::LeadIn);
    let s = r.ex.stroke().unwrap();
    assert_eq!(s.base, partial);
    let entry = s.tracked.sample(s.tracked.drawing_start()).0;
    assert!((entry.x - (0.8 + partial)).abs() < 1e-9);
    assert!(r.run_until(r.t + 120.0, |r| r.ex.state() == FsmState::Landed));
    assert!(r.ex.progress.paths.values().all(|p| p.done));
}

#[test]
fn long_swap_faults_and_reboot_clears_mission() {
    let mut r = Rig::new();
    r.ex.fsm.state = FsmState::Landed;
    r.ex.handle(r.t, Event::BatteryLow);
    r.step();
    assert_eq!(r.ex.state(), FsmState::BatterySwap);
    r.run_until(9.9, |_| false);
    assert_eq!(r.ex.state(), FsmState::BatterySwap);
    r.run_until(12.0, |_| false);
    assert_eq!(r.ex.state(), FsmState::Fault);
    // a late swap_done does not revive it
    r.ex.handle(r.t, Event::SwapDone);
    assert_eq!(r.ex.state(), FsmState::Fault);
    r.ex.handle(r.t, Event::CmdReboot);
    assert_eq!(r.ex.state(), FsmState::Idle);
    assert!(r.ex.mission.is_none());
}

#[test]
fn lost_fixes_hold_then_resume() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    r.run_until(60.0, |r| r.ex.state() == FsmState::NavigateToPath && r.t > 3.0);
    r.fixes = false;
    let lost_at = r.t;
    let mut paused_at = None;
    for _ in 0..30 {
        let c = r.step();
        if r.ex.state() == FsmState::Paused && paused_at.is_none() {
            paused_at = Some(r.t);
        }
        if r.t - lost_at > 0.3 + DT {
            assert_eq!(c.velocity, Vec3::ZERO);
        }
    }
    let paused_at = paused_at.expect("no timeout");
    assert!(paused_at - lost_at > 0.3 && paused_at - lost_at < 0.3 + 3.0 * DT);
    r.fixes = true;
    r.feed();
    r.step();
    assert_eq!(r.ex.state(), FsmState::NavigateToPath);
    assert!(r.run_until(r.t + 120.0, |r| r.ex.state() == FsmState::Landed));
}

#[test]
fn pause_holds_position_and_goto_moves() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    r.run_until(60.0, |r| r.ex.state() == FsmState::Drawing);
    r.ex.handle(r.t, Event::CmdPause);
    assert_eq!(r.ex.state(), FsmState::Paused);
    let held = r.pos;
    r.run_until(r.t + 2.0, |_| false);
    assert!(r.pos.dist(held) < 1e-9);
    let target = Vec3::new(1.0, 1.5, 0.5);
    r.ex.handle(r.t, Event::CmdGoto(target));
    r.run_until(r.t + 5.0, |_| false);
    assert!(r.pos.dist(target) < 0.01);
    r.ex.handle(r.t, Event::CmdResume);
    assert!(r.run_until(r.t + 120.0, |r| r.ex.state() == FsmState::Landed));
    assert!(r.ex.progress.paths.values().all(|p| p.done));
}

#[test]
fn progress_never_decreases_during_a_mission() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    let mut last = 0.0;
    let mut paused = false;
    while r.t < 90.0 && r.ex.state() != FsmState::Landed {
        if !paused && r.ex.state() == FsmState::Drawing && r.pos.x > 1.5 {
            r.ex.handle(r.t, Event::CmdPause);
            r.ex.handle(r.t, Event::CmdResume);
            paused = true;
        }
        r.step();
        let c = r.ex.progress.get(1).completed;
        assert!(c >= last);
        last = c;
    }
    assert!(paused && r.ex.progress.get(1).done);
}

#[test]
fn battery_low_near_the_end_finishes_the_stroke() {
    let mut r = Rig::new();
    r.ex.handle(r.t, Event::CmdTakeoff);
    r.run_until(60.0, |r| r.ex.state() == FsmState::Drawing && r.pos.x >= 1.36);
    r.ex.handle(r.t, Event::BatteryLow);
    assert_eq!(r.ex.state(), FsmState::Drawing);
    assert!(r.run_until(60.0, |r| r.ex.state() == FsmState::BatterySwap));
    assert!(r.ex.progress.get(1).done);
    assert!(!r.ex.progress.get(2).done);
}
