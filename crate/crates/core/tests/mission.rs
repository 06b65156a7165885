//! Two-drone missions on the 2 m x 2 m fixture drawing.

use mural_core::compiler::{compile, CompileParams, MissionPlan};
use mural_core::fsm::{Event, FsmState};
use mural_core::sim::{run, Scenario, ScriptAction, ScriptItem, SimReport};

fn fixture() -> MissionPlan {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/mural_2m.svg");
    let svg = std::fs::read_to_string(path).unwrap();
    compile(&svg, &CompileParams::default()).unwrap()
}

fn with_script(script: Vec<ScriptItem>) -> SimReport {
    run(Scenario { script, ..Scenario::default() }, fixture()).unwrap()
}

fn at(t: f64, drone: u32, action: ScriptAction) -> ScriptItem {
    ScriptItem { t, drone, action }
}

#[test]
fn uninterrupted_mission_paints_the_drawing() {
    let r = with_script(Vec::new());
    let m = &r.metrics;
    assert!(m.completed);
    assert_eq!(m.identity_swaps, 0);
    assert!(m.score.iou >= 0.90, "{:?}", m.score);
    assert!(m.mass_balance_rel_err < 1e-6);
    for d in &m.drones {
        assert_eq!(d.paths_done, d.paths_assigned);
        assert!(d.paths_assigned > 0);
    }
}

#[test]
fn battery_swap_matches_uninterrupted_iou() {
    let base = with_script(Vec::new()).metrics.score.iou;
    let r = with_script(vec![at(30.0, 1, ScriptAction::BatteryLow)]);
    assert!(r.metrics.completed);
    assert!(r.events.iter().any(|e| e.drone == 1 && e.detail.contains("Landed -> BatterySwap")));
    assert!((r.metrics.score.iou - base).abs() <= 0.02, "{} vs {base}", r.metrics.score.iou);
}

/// Middle of the first stroke of drone 1 that starts after `after` and
/// lasts over a second.
fn mid_stroke(r: &SimReport, after: f64) -> f64 {
    let mine: Vec<_> = r.events.iter().filter(|e| e.drone == 1 && e.detail.contains(" -> ")).collect();
    mine.windows(2)
        .find(|w| w[0].t >= after && w[0].detail.starts_with("LeadIn -> Drawing") && w[1].t - w[0].t > 1.0)
        .map(|w| (w[0].t + w[1].t) / 2.0)
        .expect("a long stroke")
}

#[test]
fn land_mid_stroke_then_resume_matches_uninterrupted_iou() {
    let clean = with_script(Vec::new());
    let base = clean.metrics.score.iou;
    let t = mid_stroke(&clean, 35.0);
    let r = with_script(vec![
        at(t, 1, ScriptAction::Command(Event::CmdLand)),
        at(t + 10.0, 1, ScriptAction::Command(Event::CmdTakeoff)),
    ]);
    assert!(r.metrics.completed);
    assert!(r.events.iter().any(|e| e.drone == 1 && e.detail == "Drawing -> LeadOut (cmd_land)"));
    assert!((r.metrics.score.iou - base).abs() <= 0.02, "{} vs {base}", r.metrics.score.iou);
}

#[test]
fn pause_and_goto_then_resume_completes() {
    let r = with_script(vec![
        at(20.0, 2, ScriptAction::Command(Event::CmdPause)),
        at(22.0, 2, ScriptAction::Command(Event::CmdGoto(mural_core::math::Vec3::new(1.5, 1.0, 0.5)))),
        at(26.0, 2, ScriptAction::Command(Event::CmdResume)),
    ]);
    assert!(r.metrics.completed);
    assert!(r.metrics.drones.iter().all(|d| d.final_state == FsmState::Landed));
}
