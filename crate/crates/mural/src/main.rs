use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use mural_core::compiler::{compile, CompileParams, PathKind};
use mural_core::sim::{Scenario, Sim};
use mural::plan_file::{parse_params, read_plan, PlanDoc};
use mural::report::{read_pgm, score_images, write_report, Provenance};
use mural::scenario_file::parse_scenario;
use mural::service::{serve, ServeConfig};
use mural::station::{parse_journal, replay, StationState, JOURNAL_MAGIC};
use mural::wire::{MsgType, Payload, WireMessage};
use mural::{sha256_hex, FormatError};

const USAGE: u8 = 1;
const INPUT: u8 = 2;
const RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "mural", version, about = "Compile, simulate, serve and score multi-drone mural missions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Turn an SVG drawing into a mission plan.
    Compile {
        #[arg(long)]
        svg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with compile parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Fly a plan in the simulator and write a report directory.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        /// Scenario TOML; defaults apply when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the ground station with a live simulated world.
    Serve {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Journal and snapshot directory; reused on restart.
        #[arg(long, default_value = "station-state")]
        state: PathBuf,
        /// Simulated seconds per second; 0 runs as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 5.0)]
        telemetry_hz: f64,
        #[arg(long, default_value_t = 10.0)]
        snapshot_every: f64,
        /// Seconds between reprojected canvas overlays; 0 disables.
        #[arg(long, default_value_t = 5.0)]
        overlay_every: f64,
        /// Report directory written when the mission ends.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a painted raster with a target raster.
    Score {
        #[arg(long)]
        canvas: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Rebuild station state from a journal or wire log, without physics.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Fail(u8, String);

impl From<FormatError> for Fail {
    fn from(e: FormatError) -> Self {
        Fail(INPUT, e.to_string())
    }
}

fn read_text(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail(INPUT, format!("{}: {e}", path.display())))
}

fn load_scenario(path: Option<&Path>) -> Result<(Scenario, String), Fail> {
    match path {
        Some(p) => {
            let text = read_text(p)?;
            Ok((parse_scenario(&text).map_err(|e| Fail(INPUT, format!("{}: {e}", p.display())))?, sha256_hex(text.as_bytes())))
        }
        None => Ok((Scenario::default(), sha256_hex(b""))),
    }
}

fn run_compile(svg: &Path, out: &Path, params: Option<&Path>) -> Result<(), Fail> {
    let params = match params {
        Some(p) => parse_params(&read_text(p)?).map_err(|e| Fail(INPUT, format!("{}: {e}", p.display())))?,
        None => CompileParams::default(),
    };
    let text = read_text(svg)?;
    let plan = compile(&text, &params).map_err(|e| Fail(INPUT, format!("{}: {e}", svg.display())))?;
    if plan.paths.is_empty() {
        return Err(Fail(INPUT, format!("{}: every path is shorter than the pruning length", svg.display())));
    }
    let doc = PlanDoc { plan, source_sha256: sha256_hex(text.as_bytes()) };
    std::fs::write(out, doc.to_json()).map_err(|e| Fail(RUNTIME, format!("{}: {e}", out.display())))?;
    let p = &doc.plan;
    let count = |k: PathKind| p.paths.iter().filter(|x| x.kind == k).count();
    println!("plan = {}", out.display());
    println!("plan_sha256 = {}", doc.hash());
    println!("source_sha256 = {}", doc.source_sha256);
    println!("paths = {}", p.paths.len());
    println!("outline_paths = {}", count(PathKind::Outline));
    println!("infill_paths = {}", count(PathKind::Infill));
    println!("draw_length_m = {:.4}", p.total_drawing_len());
    println!("travel_length_m = {:.4}", p.travel_len());
    println!("wall_extent_m = {:.4} x {:.4}", p.wall_extent.0, p.wall_extent.1);
    Ok(())
}

fn run_simulate(plan: &Path, scenario: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), Fail> {
    let doc = read_plan(plan)?;
    let (mut sc, scenario_sha256) = load_scenario(scenario)?;
    if let Some(s) = seed {
        sc.sim.seed = s;
    }
    let prov = Provenance { plan_sha256: doc.hash(), scenario_sha256, seed: sc.sim.seed };
    let started = Instant::now();
    let mut sim = Sim::new(sc, doc.plan).map_err(|e| Fail(INPUT, e.to_string()))?;
    sim.run_to_end();
    let report = sim.report();
    let wall = started.elapsed().as_secs_f64();
    write_report(out, &report, &prov).map_err(|e| Fail(RUNTIME, e.to_string()))?;
    let m = &report.metrics;
    let timing = format!("wall_clock_s = {wall:.3}\nsim_time_s = {}\nrealtime_factor = {:.1}\n", m.sim_time_s, m.sim_time_s / wall.max(1e-9));
    std::fs::write(out.join("timing.txt"), timing).map_err(|e| Fail(RUNTIME, e.to_string()))?;
    println!("iou = {:.4}", m.score.iou);
    println!("completed = {}", m.completed);
    println!("sim_time_s = {:.2}", m.sim_time_s);
    println!("report = {}", out.display());
    if !m.completed {
        return Err(Fail(RUNTIME, "mission did not complete; see metrics.txt and events.log".into()));
    }
    Ok(())
}

fn run_serve(cfg: ServeConfig, plan: &Path, scenario: Option<&Path>, out: Option<&Path>) -> Result<(), Fail> {
    let doc = read_plan(plan)?;
    let (sc, scenario_sha256) = load_scenario(scenario)?;
    let prov = Provenance { plan_sha256: doc.hash(), scenario_sha256, seed: sc.sim.seed };
    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
        signal_hook::flag::register(sig, stop.clone()).map_err(|e| Fail(RUNTIME, format!("signal handler: {e}")))?;
    }
    let outcome = serve(&cfg, doc, sc, stop, |addr| {
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
    })
    .map_err(|e| {
        let code = match e {
            mural::service::ServeError::Resume(_) => INPUT,
            mural::service::ServeError::Sim(_) => INPUT,
            _ => RUNTIME,
        };
        Fail(code, e.to_string())
    })?;
    if let Some(dir) = out {
        write_report(dir, &outcome.report, &prov).map_err(|e| Fail(RUNTIME, e.to_string()))?;
    }
    let done: usize = outcome.state.progress.values().map(|p| p.done_ids().len()).sum();
    println!("{} after {:.2} s simulated; {done} paths done", if outcome.finished { "mission over" } else { "stopped" }, outcome.report.metrics.sim_time_s);
    Ok(())
}

fn run_score(canvas: &Path, target: &Path) -> Result<(), Fail> {
    let s = score_images(&read_pgm(canvas)?, &read_pgm(target)?)?;
    println!("iou = {}", s.iou);
    println!("coverage = {}", s.coverage);
    println!("overspray = {}", s.overspray);
    Ok(())
}

/// A journal, or a bare wire log whose stateless lines are skipped.
fn read_log(text: &str) -> Result<Vec<WireMessage>, Fail> {
    if text.starts_with(JOURNAL_MAGIC) {
        return Ok(parse_journal(text).map_err(|e| Fail(INPUT, e.to_string()))?.0);
    }
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let m = WireMessage::decode(line).map_err(|e| Fail(INPUT, format!("line {}: {e}", k + 1)))?;
        if !matches!(m.kind(), MsgType::Navfix | MsgType::Preview) {
            out.push(m);
        }
    }
    Ok(out)
}

fn write_replay(dir: &Path, st: &StationState, msgs: &[WireMessage]) -> Result<(), Fail> {
    let w = |name: &str, text: &str| std::fs::write(dir.join(name), text).map_err(|e| Fail(RUNTIME, format!("{}: {e}", dir.join(name).display())));
    std::fs::create_dir_all(dir).map_err(|e| Fail(RUNTIME, format!("{}: {e}", dir.display())))?;
    w("snapshot.json", &st.snapshot_text())?;
    for (ns, p) in &st.progress {
        w(&format!("progress-{ns}.txt"), &p.to_mission_progress().to_record(&st.plan_sha256))?;
    }
    let mut events = String::new();
    for m in msgs {
        if let Payload::Event(e) = &m.payload {
            events.push_str(&format!("{:.6} {} {} {}\n", m.t, m.ns, e.kind, e.detail));
        }
    }
    w("events.log", &events)?;
    let mut summary = format!("records = {}\nstarts = {}\nlast_t_s = {}\n", st.records, st.starts, st.last_t);
    for (ns, p) in &st.progress {
        let ids: Vec<String> = p.done_ids().iter().map(u32::to_string).collect();
        summary.push_str(&format!("done.{ns} = {}\n", ids.join(",")));
    }
    for (ns, s) in &st.sessions {
        if let Some(t) = &s.telemetry {
            summary.push_str(&format!("fsm.{ns} = {}\n", t.fsm));
        }
    }
    w("summary.txt", &summary)
}

fn run_replay(log: &Path, out: &Path) -> Result<(), Fail> {
    let msgs = read_log(&read_text(log)?)?;
    let st = replay(&msgs).map_err(|e| Fail(INPUT, e.to_string()))?;
    write_replay(out, &st, &msgs)?;
    println!("records = {}", st.records);
    println!("snapshot = {}", out.join("snapshot.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let r = match cli.cmd {
        Cmd::Compile { svg, out, params } => run_compile(&svg, &out, params.as_deref()),
        Cmd::Simulate { plan, scenario, out, seed } => run_simulate(&plan, scenario.as_deref(), &out, seed),
        Cmd::Serve { plan, scenario, port, host, state, speed, telemetry_hz, snapshot_every, overlay_every, out } => {
            if !(speed >= 0.0 && telemetry_hz > 0.0 && snapshot_every > 0.0 && overlay_every >= 0.0) {
                Err(Fail(USAGE, "speed and overlay interval must be non-negative, rates and intervals positive".into()))
            } else {
                let cfg = ServeConfig {
                    bind: format!("{host}:{port}"),
                    state_dir: state,
                    speed,
                    telemetry_hz,
                    snapshot_every_s: snapshot_every,
                    overlay_every_s: overlay_every,
                    stop_after_s: None,
                };
                run_serve(cfg, &plan, scenario.as_deref(), out.as_deref())
            }
        }
        Cmd::Score { canvas, target } => run_score(&canvas, &target),
        Cmd::Replay { log, out } => run_replay(&log, &out),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("mural: {msg}");
            ExitCode::from(code)
        }
    }
}
