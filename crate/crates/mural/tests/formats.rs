use std::path::PathBuf;

use mural::pgm::Pgm;
use mural::plan_file::{params_to_toml, parse_params, PlanDoc};
use mural::report::{parse_metrics, score_images, write_report, Provenance};
use mural::scenario_file::{default_scenario_toml, parse_scenario, scenario_to_toml};
use mural::wire::{CommandMsg, EventMsg, NavFixMsg, Payload, TelemetryMsg, Verb, WireMessage};
use mural::FormatError;
use mural_core::compiler::{compile, CompileParams};
use mural_core::progress::MissionProgress;
use mural_core::sim::{Scenario, Sim};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn plan_doc() -> PlanDoc {
    let svg = std::fs::read_to_string(fixture("mural_2m.svg")).unwrap();
    PlanDoc { plan: compile(&svg, &CompileParams::default()).unwrap(), source_sha256: mural::sha256_hex(svg.as_bytes()) }
}

#[test]
fn golden_wire_lines_round_trip_byte_for_byte() {
    let text = std::fs::read_to_string(fixture("wire/valid.jsonl")).unwrap();
    let mut kinds = std::collections::BTreeSet::new();
    for line in text.lines() {
        let m = WireMessage::decode(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert_eq!(m.encode(), line);
        kinds.insert(m.kind());
    }
    assert_eq!(kinds.len(), 8, "fixture covers every message type");
}

#[test]
fn golden_invalid_lines_are_rejected() {
    let text = std::fs::read_to_string(fixture("wire/invalid.jsonl")).unwrap();
    let mut n = 0;
    for line in text.lines() {
        assert!(WireMessage::decode(line).is_err(), "accepted: {line}");
        n += 1;
    }
    assert!(n >= 20);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (finite(), finite(), finite(), finite(), any::<bool>(), 0.0..1.0f64).prop_map(|(u, v, n, yaw, b, quality)| Payload::NavFix(NavFixMsg {
            u,
            v,
            n,
            yaw,
            source: if b { "primary_link" } else { "backup_link" }.into(),
            quality
        })),
        ("[A-Za-z]{1,12}", 0.0..1.0f64, finite(), finite()).prop_map(|(fsm, battery, paint_g, spray_s)| Payload::Telemetry(TelemetryMsg { fsm, battery, paint_g, spray_s })),
        (finite(), finite(), finite()).prop_map(|(a, b, c)| Payload::Command(CommandMsg { verb: Verb::Goto, args: vec![a, b, c] })),
        ("\\PC{0,40}", prop::collection::vec(any::<u32>(), 0..5)).prop_map(|(d, ids)| Payload::Event(EventMsg { ids, ..EventMsg::error("x", d) })),
    ]
}

proptest! {
    #[test]
    fn encode_decode_is_identity(ns in "[A-Za-z0-9_-]{1,64}", seq in any::<u64>(), micros in 0u64..10_000_000_000_000, p in payload()) {
        let m = WireMessage::new(ns, seq, micros as f64 / 1e6, p);
        let line = m.encode();
        prop_assert!(!line.contains('\n'));
        let back = WireMessage::decode(&line).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.encode(), line);
    }

    #[test]
    fn pgm_round_trips(w in 1usize..20, h in 1usize..20, deep in any::<bool>(), seed in any::<u64>()) {
        let maxval: u16 = if deep { 65535 } else { 255 };
        let data = (0..w * h).map(|k| ((seed.wrapping_mul(k as u64 + 7) >> 17) % (u64::from(maxval) + 1)) as u16).collect();
        let p = Pgm { width: w, height: h, maxval, comments: vec!["origin_m 0 0".into(), "cell_m 0.005".into()], data };
        prop_assert_eq!(Pgm::decode(&p.encode()).unwrap(), p);
    }
}

#[test]
fn truncated_pgm_is_an_error() {
    let p = Pgm { width: 3, height: 2, maxval: 255, comments: vec![], data: vec![1, 2, 3, 4, 5, 6] };
    let mut bytes = p.encode();
    bytes.pop();
    assert!(matches!(Pgm::decode(&bytes), Err(FormatError::Pgm(_))));
    assert!(Pgm::decode(b"P2\n1 1\n255\n0").is_err());
}

#[test]
fn plan_json_round_trips_and_hash_is_stable() {
    let doc = plan_doc();
    let text = doc.to_json();
    let back = PlanDoc::from_json(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.to_json(), text);
    assert_eq!(back.hash(), doc.hash());
    assert_eq!(doc.hash().len(), 64);
}

#[test]
fn plan_json_rejects_wrong_version_and_unknown_fields() {
    let text = plan_doc().to_json();
    assert!(PlanDoc::from_json(&text.replacen("\"version\": 1", "\"version\": 2", 1)).is_err());
    assert!(PlanDoc::from_json(&text.replacen("{", "{\"colour\": 1,", 1)).is_err());
}

#[test]
fn params_file_names_the_bad_key() {
    let p = parse_params("infill_spacing = 0.05\n").unwrap();
    assert_eq!(p.infill_spacing, 0.05);
    assert_eq!(parse_params(&params_to_toml(&p)).unwrap(), p);
    let e = parse_params("spacing = 0.05\n").unwrap_err().to_string();
    assert!(e.contains("spacing"), "{e}");
    let e = parse_params("infill_spacing = -1.0\n").unwrap_err().to_string();
    assert!(e.contains("infill_spacing"), "{e}");
}

#[test]
fn default_scenario_fixture_matches() {
    let path = fixture("scenario_default.toml");
    if std::env::var_os("MURAL_BLESS").is_some() {
        std::fs::write(&path, default_scenario_toml()).unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, default_scenario_toml());
    let sc = parse_scenario(&text).unwrap();
    assert_eq!(scenario_to_toml(&sc), text);
    assert_eq!(scenario_to_toml(&Scenario::default()), text);
}

#[test]
fn scenario_rejects_unknown_keys_with_their_name() {
    let e = parse_scenario("[wind]\ngust_mps = 3.0\n").unwrap_err().to_string();
    assert!(e.contains("gust_mps"), "{e}");
}

#[test]
fn report_directory_is_complete_and_parseable() {
    let doc = plan_doc();
    let mut sim = Sim::new(Scenario::default(), doc.plan.clone()).unwrap();
    sim.run_to_end();
    let report = sim.report();
    let dir = tempfile::tempdir().unwrap();
    let prov = Provenance { plan_sha256: doc.hash(), scenario_sha256: "s".into(), seed: 1 };
    write_report(dir.path(), &report, &prov).unwrap();
    let metrics = parse_metrics(&std::fs::read_to_string(dir.path().join("metrics.txt")).unwrap()).unwrap();
    assert_eq!(metrics["plan_sha256"], doc.hash());
    assert_eq!(metrics["completed"], "true");
    assert!(metrics.contains_key("drone.1.paths_done"));
    let iou: f64 = metrics["iou"].parse().unwrap();

    let painted = Pgm::decode(&std::fs::read(dir.path().join("painted.pgm")).unwrap()).unwrap();
    let target = Pgm::decode(&std::fs::read(dir.path().join("target.pgm")).unwrap()).unwrap();
    assert_eq!(painted.comment("plan_sha256"), Some(doc.hash().as_str()));
    assert_eq!(score_images(&painted, &target).unwrap().iou, iou);

    // the 16-bit canvas thresholded at half range gives the painted mask
    let canvas = Pgm::decode(&std::fs::read(dir.path().join("canvas.pgm")).unwrap()).unwrap();
    assert_eq!(canvas.maxval, 65535);
    assert_eq!(canvas.to_mask(), painted.to_mask());

    for (id, ids) in sim.assignments() {
        let rec = std::fs::read_to_string(dir.path().join(format!("progress-d{id}.txt"))).unwrap();
        let mut slice = doc.plan.clone();
        slice.paths.retain(|p| ids.contains(&p.id));
        let p = MissionProgress::from_record(&rec, &slice, &doc.hash()).unwrap();
        assert_eq!(p.to_record(&doc.hash()), rec);
    }
}
