//! Simulation report files.
//!
//! A report directory holds `canvas.pgm`, `painted.pgm`, `target.pgm`,
//! `metrics.txt`, `events.log` and one `progress-d<id>.txt` per drone.
//! Everything there is a pure function of the inputs; wall-clock timing
//! goes to `timing.txt` next to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mural_core::sim::canvas::{score, Grid, Raster, Score};
use mural_core::sim::SimReport;

use crate::pgm::{canvas_pgm, raster_pgm, Pgm};
use crate::FormatError;

pub const METRICS_HEADER: &str = "# mural-metrics 1";

/// Hashes of the inputs a report was produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub plan_sha256: String,
    pub scenario_sha256: String,
    pub seed: u64,
}

impl Provenance {
    fn comments(&self) -> Vec<String> {
        vec![
            format!("plan_sha256 {}", self.plan_sha256),
            format!("scenario_sha256 {}", self.scenario_sha256),
            format!("seed {}", self.seed),
        ]
    }
}

pub fn metrics_text(report: &SimReport, prov: &Provenance) -> String {
    let m = &report.metrics;
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("plan_sha256", &prov.plan_sha256);
    kv("scenario_sha256", &prov.scenario_sha256);
    kv("seed", &prov.seed);
    kv("sim_time_s", &m.sim_time_s);
    kv("ticks", &m.ticks);
    kv("completed", &m.completed);
    kv("drones", &m.drones.len());
    kv("iou", &m.score.iou);
    kv("coverage", &m.score.coverage);
    kv("overspray", &m.score.overspray);
    kv("cross_track_mean_m", &m.cross_track_mean_m);
    kv("cross_track_p95_m", &m.cross_track_p95_m);
    kv("cross_track_max_m", &m.cross_track_max_m);
    kv("speed_dev_mean", &m.speed_dev_mean);
    kv("speed_dev_max", &m.speed_dev_max);
    kv("wall_dev_max_m", &m.wall_dev_max_m);
    kv("travel_m", &m.travel_m);
    kv("identity_swaps", &m.identity_swaps);
    kv("paint_initial_g", &m.paint_initial_g);
    kv("paint_remaining_g", &m.paint_remaining_g);
    kv("paint_canvas_g", &m.paint_canvas_g);
    kv("paint_lost_g", &m.paint_lost_g);
    kv("mass_balance_rel_err", &m.mass_balance_rel_err);
    kv("calibration_rms_px", &m.calibration_rms_px);
    kv("paint_threshold_g", &report.paint_threshold);
    kv("canvas_cell_m", &report.canvas.grid.cell);
    kv("canvas_cells", &format!("{}x{}", report.canvas.grid.width, report.canvas.grid.height));
    for d in &m.drones {
        let _ = writeln!(s, "\n[drone.{}]", d.id);
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("final_state", &d.final_state.as_str());
        kv("paths_assigned", &d.paths_assigned);
        kv("paths_done", &d.paths_done);
        kv("cross_track_mean_m", &d.cross_track_mean_m);
        kv("cross_track_p95_m", &d.cross_track_p95_m);
        kv("cross_track_max_m", &d.cross_track_max_m);
        kv("speed_dev_mean", &d.speed_dev_mean);
        kv("speed_dev_max", &d.speed_dev_max);
        kv("wall_dev_max_m", &d.wall_dev_max_m);
        kv("wall_min_m", &d.wall_min_m);
        kv("travel_m", &d.travel_m);
        kv("spray_s", &d.spray_s);
        kv("paint_used_g", &d.paint_used_g);
        kv("battery", &d.battery);
        kv("fixes_primary", &d.fixes_primary);
        kv("fixes_backup", &d.fixes_backup);
        kv("max_fix_gap_s", &d.max_fix_gap_s);
        kv("identity_swaps", &d.identity_swaps);
    }
    format!("{METRICS_HEADER}\n{s}")
}

/// Flattens a metrics file into `key -> value`, prefixing keys inside a
/// `[section]` with `section.`.
pub fn parse_metrics(text: &str) -> Result<BTreeMap<String, String>, FormatError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = format!("{name}.");
            continue;
        }
        let (k, v) = line.split_once(" = ").ok_or_else(|| FormatError::Metrics(format!("line {}: expected `key = value`", i + 1)))?;
        out.insert(format!("{section}{k}"), v.to_string());
    }
    Ok(out)
}

pub fn events_text(report: &SimReport) -> String {
    let mut s = String::new();
    for e in &report.events {
        let _ = writeln!(s, "{:.6} d{} {} {}", e.t, e.drone, e.kind, e.detail);
    }
    s
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), FormatError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| FormatError::io(&path, e))
}

pub fn write_report(dir: &Path, report: &SimReport, prov: &Provenance) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    write(dir, "canvas.pgm", &canvas_pgm(&report.canvas, report.paint_threshold, prov.comments()).encode())?;
    write(dir, "painted.pgm", &raster_pgm(&report.painted, prov.comments()).encode())?;
    write(dir, "target.pgm", &raster_pgm(&report.target, prov.comments()).encode())?;
    write(dir, "metrics.txt", metrics_text(report, prov).as_bytes())?;
    write(dir, "events.log", events_text(report).as_bytes())?;
    for (id, p) in &report.progress {
        write(dir, &format!("progress-d{id}.txt"), p.to_record(&prov.plan_sha256).as_bytes())?;
    }
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<Pgm, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    Pgm::decode(&bytes)
}

/// Scores a painted image against a target image of the same size.
pub fn score_images(painted: &Pgm, target: &Pgm) -> Result<Score, FormatError> {
    if (painted.width, painted.height) != (target.width, target.height) {
        return Err(FormatError::Pgm(format!(
            "size mismatch: {}x{} against {}x{}",
            painted.width, painted.height, target.width, target.height
        )));
    }
    let grid = Grid { origin: mural_core::math::Vec2::new(0.0, 0.0), cell: 1.0, width: painted.width, height: painted.height };
    Ok(score(&Raster { grid, cells: painted.to_mask() }, &Raster { grid, cells: target.to_mask() }))
}
