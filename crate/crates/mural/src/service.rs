//! The live ground station: a simulated world, its in-process executors
//! and the station state, driven from one loop. Clients speak the wire
//! protocol as newline-delimited JSON over TCP or as WebSocket text frames
//! on the same port; a connection is a WebSocket when it opens with an
//! HTTP `GET`.
//!
//! Every client message lands on one channel and is handled in arrival
//! order by the loop, so state transitions are totally ordered.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use mural_core::fsm::{draw_event, FsmState};
use mural_core::progress::MissionProgress;
use mural_core::sim::{Scenario, Sim, SimError, SimEvent, SimReport};

use crate::plan_file::PlanDoc;
use crate::reproject::{encode_overlay, overlay_raster, render_view, reproject};
use crate::station::{progress_msg, recover, write_snapshot, Journal, Reject, StationError, StationState, SNAPSHOT_FILE, STATION_NS};
use crate::wire::{
    CommandMsg, EventMsg, Hello, MissionMsg, MsgType, NavFixMsg, Payload, PreviewMsg, PreviewPath, Role, SeqCheck, SeqGen, TelemetryMsg,
    WireMessage,
};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: String,
    pub state_dir: PathBuf,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub speed: f64,
    pub telemetry_hz: f64,
    /// Simulated seconds between snapshots.
    pub snapshot_every_s: f64,
    /// Simulated seconds between reprojected canvas overlays; 0 disables.
    pub overlay_every_s: f64,
    /// Stop after this much simulated time, as if signalled.
    pub stop_after_s: Option<f64>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:0".into(),
            state_dir: PathBuf::from("station-state"),
            speed: 1.0,
            telemetry_hz: 5.0,
            snapshot_every_s: 10.0,
            overlay_every_s: 5.0,
            stop_after_s: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Station(#[from] StationError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("state directory belongs to another mission: {0}")]
    Resume(Reject),
}

#[derive(Debug)]
pub struct ServeOutcome {
    /// The mission ran to its end rather than being stopped.
    pub finished: bool,
    pub report: SimReport,
    pub state: StationState,
}

enum Outbound {
    Text(String),
    Close,
}

enum Inbound {
    Open(u64, Sender<Outbound>),
    Line(u64, String),
    Closed(u64),
}

struct Conn {
    tx: Sender<Outbound>,
    ns: Option<String>,
    role: Option<Role>,
    seqs: SeqCheck,
}

fn ns_of(id: u32) -> String {
    format!("d{id}")
}

fn drone_of(ns: &str) -> Option<u32> {
    ns.strip_prefix('d').and_then(|s| s.parse().ok())
}

struct Station {
    sim: Sim,
    plan: PlanDoc,
    plan_hash: String,
    state: StationState,
    journal: Journal,
    seqs: SeqGen,
    conns: BTreeMap<u64, Conn>,
    t0: f64,
    published: BTreeMap<u32, (FsmState, Vec<u32>, Option<u32>, f64)>,
    last_telemetry: f64,
    telemetry_hz: f64,
}

impl Station {
    fn now(&self) -> f64 {
        self.t0 + self.sim.time()
    }

    fn deliver(&self, msg: &WireMessage) {
        let text = msg.encode();
        for c in self.conns.values() {
            let want = match (c.role, &c.ns) {
                (Some(Role::Console), _) => true,
                (Some(Role::Executor), Some(ns)) => *ns == msg.ns && matches!(msg.kind(), MsgType::Navfix | MsgType::Command),
                _ => false,
            };
            if want {
                let _ = c.tx.send(Outbound::Text(text.clone()));
            }
        }
    }

    /// Journals, applies and fans out one state-changing message.
    fn commit(&mut self, ns: &str, payload: Payload) -> Result<WireMessage, Reject> {
        let t = self.now().max(self.state.last_t);
        let mut probe = self.seqs.clone();
        let msg = probe.stamp(ns, t, payload);
        self.state.check(&msg)?;
        self.journal.append(&msg).map_err(|e| Reject::Invalid(e.to_string()))?;
        self.seqs = probe;
        self.state.apply(&msg).expect("checked above");
        self.deliver(&msg);
        Ok(msg)
    }

    fn commit_internal(&mut self, ns: &str, payload: Payload) {
        if let Err(e) = self.commit(ns, payload) {
            eprintln!("station: dropped internal message: {e}");
        }
    }

    /// A message that changes nothing: fixes, previews.
    fn broadcast(&mut self, ns: &str, payload: Payload) {
        let t = self.now();
        let msg = self.seqs.stamp(ns, t, payload);
        self.deliver(&msg);
    }

    fn reply(&mut self, conn: u64, payload: Payload) {
        let t = self.now();
        let msg = self.seqs.stamp(STATION_NS, t, payload);
        if let Some(c) = self.conns.get(&conn) {
            let _ = c.tx.send(Outbound::Text(msg.encode()));
        }
    }

    fn preview(&self, overlay: bool) -> PreviewMsg {
        let mut slices = BTreeMap::new();
        for (id, ids) in self.sim.assignments() {
            let paths = ids
                .iter()
                .filter_map(|pid| self.plan.plan.path(*pid))
                .map(|p| PreviewPath { id: p.id, kind: p.kind.as_str().into(), points: p.drawing_points().iter().map(|q| [q.x, q.y]).collect() })
                .collect();
            slices.insert(ns_of(id), paths);
        }
        let overlay = if overlay {
            let cfg = &self.sim.scenario;
            let c = &cfg.executor.controller;
            let threshold = cfg.sim.spray.paint_threshold(cfg.sim.canvas_cell, c.v_draw, c.wall_setpoint);
            render_view(&self.sim.camera_truth, &self.sim.wall, self.sim.canvas(), threshold)
                .and_then(|f| reproject(&f, Some(&self.sim.camera), &self.sim.wall, self.sim.canvas().grid).ok())
                .map(|v| encode_overlay(&overlay_raster(self.sim.canvas().grid, &v)))
        } else {
            None
        };
        PreviewMsg { wall_extent: [self.plan.plan.wall_extent.0, self.plan.plan.wall_extent.1], slices, overlay }
    }

    fn assignment_msg(&self) -> MissionMsg {
        MissionMsg { selections: self.sim.assignments().into_iter().map(|(id, ids)| (ns_of(id), ids)).collect() }
    }

    fn error(&mut self, conn: u64, kind: &str, detail: String, ids: Vec<u32>) {
        self.reply(conn, Payload::Event(EventMsg { ids, ..EventMsg::error(kind, detail) }));
    }

    fn handle_line(&mut self, conn: u64, line: &str) {
        if line.trim().is_empty() {
            return;
        }
        let msg = match WireMessage::decode(line) {
            Ok(m) => m,
            Err(e) => return self.error(conn, "malformed", e.to_string(), vec![]),
        };
        let Some(c) = self.conns.get_mut(&conn) else { return };
        if let Err(e) = c.seqs.check(&msg) {
            return self.error(conn, "sequence", e.to_string(), vec![]);
        }
        let (role, own_ns) = (c.role, c.ns.clone());
        match (&msg.payload, role) {
            (Payload::Hello(h), None) => self.hello(conn, &msg.ns, h),
            (Payload::Hello(_), Some(_)) => self.error(conn, "protocol", "HELLO already received".into(), vec![]),
            (_, None) => self.error(conn, "protocol", "send HELLO first".into(), vec![]),
            (Payload::Command(cmd), Some(Role::Console)) => self.command(conn, &msg.ns, cmd),
            (Payload::Mission(m), Some(Role::Console)) => self.mission(conn, m),
            (Payload::Telemetry(_) | Payload::Progress(_) | Payload::Event(_), Some(Role::Executor)) => {
                // an external executor reporting on its own namespace
                if Some(&msg.ns) != own_ns.as_ref() {
                    return self.error(conn, "protocol", format!("executor {:?} cannot report for {:?}", own_ns.unwrap_or_default(), msg.ns), vec![]);
                }
                if let Err(e) = self.commit(&msg.ns, msg.payload.clone()) {
                    self.error(conn, "rejected", e.to_string(), vec![]);
                }
            }
            (_, Some(r)) => self.error(conn, "direction", format!("{} may not send {}", r.as_str(), msg.kind()), vec![]),
        }
    }

    fn hello(&mut self, conn: u64, ns: &str, h: &Hello) {
        if h.role == Role::Station {
            return self.error(conn, "protocol", "clients cannot claim the station role".into(), vec![]);
        }
        match self.commit(ns, Payload::Hello(Hello { role: h.role, plan_sha256: None })) {
            Ok(_) => {
                if let Some(c) = self.conns.get_mut(&conn) {
                    c.ns = Some(ns.to_string());
                    c.role = Some(h.role);
                }
                let hello = Payload::Hello(Hello { role: Role::Station, plan_sha256: Some(self.plan_hash.clone()) });
                self.reply(conn, hello);
                if h.role == Role::Console {
                    let preview = Payload::Preview(self.preview(false));
                    self.reply(conn, preview);
                    let mission = Payload::Mission(self.assignment_msg());
                    self.reply(conn, mission);
                }
            }
            Err(e) => {
                self.error(conn, "namespace_taken", e.to_string(), vec![]);
                if let Some(c) = self.conns.get(&conn) {
                    let _ = c.tx.send(Outbound::Close);
                }
            }
        }
    }

    fn command(&mut self, conn: u64, ns: &str, cmd: &CommandMsg) {
        let sim_drone = drone_of(ns).filter(|id| self.sim.drone(*id).is_some());
        let event = match (sim_drone, cmd.event()) {
            (Some(id), None) => {
                let state = self.sim.drone(id).expect("present").exec.state();
                match draw_event(state) {
                    Some(e) => Some(e),
                    None => return self.error(conn, "command_rejected", format!("draw is not available in {}", state.as_str()), vec![]),
                }
            }
            (_, e) => e,
        };
        if let Err(e) = self.commit(ns, Payload::Command(cmd.clone())) {
            return self.error(conn, "command_rejected", e.to_string(), vec![]);
        }
        if let (Some(id), Some(ev)) = (sim_drone, event) {
            self.sim.command(id, ev);
        }
    }

    fn mission(&mut self, conn: u64, m: &MissionMsg) {
        let mut selections = Vec::new();
        for (ns, ids) in &m.selections {
            match drone_of(ns).filter(|id| self.sim.drone(*id).is_some()) {
                Some(id) => selections.push((id, ids.clone())),
                None => return self.error(conn, "mission_rejected", format!("no drone {ns:?}"), vec![]),
            }
        }
        let previous = self.sim.assignments();
        // the reducer checks overlap too; checking here first names the ids
        let mut seen = std::collections::BTreeSet::new();
        let dup: Vec<u32> = selections.iter().flat_map(|(_, ids)| ids.iter().copied()).filter(|id| !seen.insert(*id)).collect();
        if !dup.is_empty() {
            return self.error(conn, "mission_rejected", format!("paths selected more than once: {dup:?}"), dup);
        }
        if let Err(e) = self.sim.assign(&selections) {
            let ids = match &e {
                SimError::Assign(mural_core::assign::AssignError::Overlap(v) | mural_core::assign::AssignError::Unknown(v)) => v.clone(),
                _ => vec![],
            };
            return self.error(conn, "mission_rejected", e.to_string(), ids);
        }
        let msg = Payload::Mission(self.assignment_msg());
        if let Err(e) = self.commit(STATION_NS, msg) {
            // keep the simulation consistent with the journal
            let _ = self.sim.assign(&previous);
            return self.error(conn, "mission_rejected", e.to_string(), vec![]);
        }
        let preview = Payload::Preview(self.preview(false));
        self.broadcast(STATION_NS, preview);
    }

    fn disconnect(&mut self, conn: u64) {
        if let Some(c) = self.conns.remove(&conn) {
            if let Some(ns) = c.ns {
                self.commit_internal(&ns, crate::station::disconnect_event());
            }
        }
    }

    fn sim_event(&mut self, e: &SimEvent) {
        let ns = if e.drone == 0 { STATION_NS.to_string() } else { ns_of(e.drone) };
        let level = if matches!(e.kind, "command_dropped" | "lidar_fail" | "track_lost" | "identity_swap" | "paint_empty") {
            crate::wire::Level::Error
        } else {
            crate::wire::Level::Info
        };
        self.commit_internal(&ns, Payload::Event(EventMsg { level, kind: e.kind.to_string(), detail: e.detail.clone(), ids: vec![] }));
    }

    fn publish_drone_state(&mut self, force_telemetry: bool) {
        let now = self.sim.time();
        let periodic = force_telemetry || now - self.last_telemetry >= 1.0 / self.telemetry_hz - 1e-9;
        if periodic {
            self.last_telemetry = now;
        }
        for tel in self.sim.telemetry() {
            let d = self.sim.drone(tel.drone).expect("present");
            let p = d.exec.progress.clone();
            let on_stroke = d.exec.stroke().is_some();
            let done = p.done_ids();
            let prev = self.published.get(&tel.drone).cloned();
            let state_changed = prev.as_ref().is_none_or(|x| x.0 != tel.fsm);
            let progress_changed = prev.as_ref().is_none_or(|x| x.1 != done || x.2 != p.current);
            let progress_due = prev.as_ref().is_some_and(|x| now - x.3 >= 1.0) && on_stroke;
            let ns = ns_of(tel.drone);
            if progress_changed || progress_due {
                let msg = Payload::Progress(progress_msg(&p, &self.plan_hash));
                self.commit_internal(&ns, msg);
            }
            if periodic || state_changed {
                let msg = Payload::Telemetry(TelemetryMsg { fsm: tel.fsm.as_str().into(), battery: tel.battery, paint_g: tel.paint_g, spray_s: tel.spray_s });
                self.commit_internal(&ns, msg);
            }
            let stamp = if progress_changed || progress_due { now } else { prev.map_or(now, |x| x.3) };
            self.published.insert(tel.drone, (tel.fsm, done, p.current, stamp));
        }
    }

    /// Nothing left that can happen without an operator.
    fn mission_over(&self) -> bool {
        if !self.sim.is_finished() {
            return false;
        }
        let out_of_time = self.sim.time() >= self.sim.scenario.sim.max_time;
        let fault = self.sim.drones.iter().any(|d| d.exec.state() == FsmState::Fault);
        let done = self.sim.drones.iter().all(|d| d.exec.mission.as_ref().is_none_or(|m| m.paths.iter().all(|p| d.exec.progress.get(p.id).done)));
        out_of_time || fault || done
    }
}

fn spawn_listener(listener: TcpListener, tx: Sender<Inbound>, stop: Arc<AtomicBool>) -> thread::JoinHandle<()> {
    listener.set_nonblocking(true).expect("nonblocking listener");
    thread::spawn(move || {
        let mut next = 1u64;
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let id = next;
                    next += 1;
                    let tx = tx.clone();
                    thread::spawn(move || handle_conn(id, stream, tx));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(_) => thread::sleep(Duration::from_millis(5)),
            }
        }
    })
}

fn is_websocket(stream: &TcpStream) -> bool {
    let mut buf = [0u8; 4];
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match stream.peek(&mut buf) {
            Ok(0) => return false,
            Ok(n) if n >= 4 || buf[..n] != b"GET "[..n] => return &buf[..n] == b"GET ",
            Ok(_) if Instant::now() > deadline => return false,
            Ok(_) => thread::sleep(Duration::from_millis(2)),
            Err(_) => return false,
        }
    }
}

fn handle_conn(id: u64, stream: TcpStream, tx: Sender<Inbound>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    if is_websocket(&stream) {
        websocket_conn(id, stream, tx);
    } else {
        line_conn(id, stream, tx);
    }
}

fn line_conn(id: u64, stream: TcpStream, tx: Sender<Inbound>) {
    let (otx, orx) = mpsc::channel();
    let Ok(mut writer) = stream.try_clone() else { return };
    if tx.send(Inbound::Open(id, otx)).is_err() {
        return;
    }
    let shutdown = stream.try_clone().ok();
    let w = thread::spawn(move || {
        for o in orx {
            match o {
                Outbound::Text(mut s) => {
                    s.push('\n');
                    if writer.write_all(s.as_bytes()).is_err() {
                        break;
                    }
                }
                Outbound::Close => break,
            }
        }
        if let Some(s) = shutdown {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
    });
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        match line {
            Ok(l) => {
                if tx.send(Inbound::Line(id, l)).is_err() {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    let _ = tx.send(Inbound::Closed(id));
    let _ = w.join();
}

fn websocket_conn(id: u64, stream: TcpStream, tx: Sender<Inbound>) {
    use tungstenite::Message;
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)));
    let (otx, orx) = mpsc::channel();
    if tx.send(Inbound::Open(id, otx)).is_err() {
        return;
    }
    'outer: loop {
        loop {
            match orx.try_recv() {
                Ok(Outbound::Text(s)) => {
                    if ws.send(Message::text(s)).is_err() {
                        break 'outer;
                    }
                }
                Ok(Outbound::Close) | Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'outer;
                }
                Err(mpsc::TryRecvError::Empty) => break,
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                for l in t.as_str().lines() {
                    if tx.send(Inbound::Line(id, l.to_string())).is_err() {
                        break 'outer;
                    }
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
    let _ = tx.send(Inbound::Closed(id));
}

/// Runs the station until the mission is over or `stop` is raised.
/// `on_ready` receives the bound address once clients can connect.
pub fn serve(
    cfg: &ServeConfig,
    plan: PlanDoc,
    scenario: Scenario,
    stop: Arc<AtomicBool>,
    on_ready: impl FnOnce(SocketAddr),
) -> Result<ServeOutcome, ServeError> {
    let listener = TcpListener::bind(&cfg.bind).map_err(|source| ServeError::Bind { addr: cfg.bind.clone(), source })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind { addr: cfg.bind.clone(), source })?;
    let (state, journal) = recover(&cfg.state_dir)?;
    let plan_hash = plan.hash();
    if !state.plan_sha256.is_empty() && state.plan_sha256 != plan_hash {
        return Err(ServeError::Resume(Reject::PlanMismatch { expected: state.plan_sha256.clone(), found: plan_hash }));
    }
    let sim = Sim::new(scenario, plan.plan.clone())?;
    let mut seqs = SeqGen::default();
    for (ns, m) in &state.seqs {
        for (kind, seq) in m {
            seqs.resume(ns, *kind, *seq);
        }
    }
    let t0 = state.last_t;
    let mut st = Station {
        sim,
        plan,
        plan_hash: plan_hash.clone(),
        state,
        journal,
        seqs,
        conns: BTreeMap::new(),
        t0,
        published: BTreeMap::new(),
        last_telemetry: f64::NEG_INFINITY,
        telemetry_hz: cfg.telemetry_hz.max(1e-3),
    };

    st.commit(STATION_NS, Payload::Hello(Hello { role: Role::Station, plan_sha256: Some(plan_hash.clone()) })).map_err(ServeError::Resume)?;
    let ids: Vec<u32> = st.sim.drones.iter().map(|d| d.spec.id).collect();
    for id in &ids {
        st.commit(&ns_of(*id), Payload::Hello(Hello { role: Role::Executor, plan_sha256: None })).map_err(ServeError::Resume)?;
    }
    if st.state.assignment.is_empty() {
        let m = Payload::Mission(st.assignment_msg());
        st.commit(STATION_NS, m).map_err(ServeError::Resume)?;
    } else {
        let selections: Vec<(u32, Vec<u32>)> = st.state.assignment.iter().filter_map(|(ns, v)| drone_of(ns).map(|id| (id, v.clone()))).collect();
        st.sim.assign(&selections)?;
    }
    // recorded work carries over into the restarted executors
    for id in &ids {
        let Some(rec) = st.state.progress.get(&ns_of(*id)) else { continue };
        let Some(slice) = st.sim.drone(*id).and_then(|d| d.exec.mission.clone()) else { continue };
        let mut p = MissionProgress::new(&slice);
        let stored = rec.to_mission_progress();
        for (pid, pp) in p.paths.iter_mut() {
            *pp = stored.get(*pid);
        }
        p.current = stored.current.filter(|c| p.paths.contains_key(c));
        p.spray_seconds = stored.spray_seconds;
        st.sim.restore_progress(*id, p);
    }
    st.publish_drone_state(true);
    let snapshot_path = cfg.state_dir.join(SNAPSHOT_FILE);
    st.journal.sync()?;
    write_snapshot(&snapshot_path, &st.state)?;

    let (tx, rx): (Sender<Inbound>, Receiver<Inbound>) = mpsc::channel();
    let listen_stop = Arc::new(AtomicBool::new(false));
    let listener_thread = spawn_listener(listener, tx, listen_stop.clone());
    on_ready(addr);

    let started = Instant::now();
    let sim_start = st.sim.time();
    let mut last_snapshot = st.sim.time();
    let mut last_overlay = f64::NEG_INFINITY;
    let mut finished = false;
    loop {
        if stop.load(Ordering::Relaxed) || cfg.stop_after_s.is_some_and(|s| st.sim.time() >= s) {
            break;
        }
        // drain client traffic until the next tick is due
        let due = if cfg.speed > 0.0 { started + Duration::from_secs_f64((st.sim.time() - sim_start + st.sim.dt()) / cfg.speed) } else { Instant::now() };
        loop {
            let wait = due.saturating_duration_since(Instant::now());
            let item = if wait.is_zero() {
                match rx.try_recv() {
                    Ok(i) => i,
                    Err(_) => break,
                }
            } else {
                match rx.recv_timeout(wait.min(Duration::from_millis(50))) {
                    Ok(i) => i,
                    Err(RecvTimeoutError::Timeout) => {
                        if stop.load(Ordering::Relaxed) {
                            break;
                        }
                        continue;
                    }
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            };
            match item {
                Inbound::Open(id, otx) => {
                    st.conns.insert(id, Conn { tx: otx, ns: None, role: None, seqs: SeqCheck::default() });
                }
                Inbound::Line(id, line) => st.handle_line(id, &line),
                Inbound::Closed(id) => st.disconnect(id),
            }
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }

        let out = st.sim.step();
        for f in &out.fixes {
            let msg = Payload::NavFix(NavFixMsg {
                u: f.position.x,
                v: f.position.y,
                n: f.position.z,
                yaw: f.yaw,
                source: f.source.as_str().into(),
                quality: f.quality,
            });
            st.broadcast(&ns_of(f.drone_id), msg);
        }
        for e in &out.events {
            st.sim_event(e);
        }
        st.publish_drone_state(false);
        let now = st.sim.time();
        if cfg.overlay_every_s > 0.0 && now - last_overlay >= cfg.overlay_every_s && st.conns.values().any(|c| c.role == Some(Role::Console)) {
            last_overlay = now;
            let p = Payload::Preview(st.preview(true));
            st.broadcast(STATION_NS, p);
        }
        if now - last_snapshot >= cfg.snapshot_every_s {
            last_snapshot = now;
            st.journal.sync()?;
            write_snapshot(&snapshot_path, &st.state)?;
        }
        if st.mission_over() {
            finished = true;
            break;
        }
    }

    let reason = if finished { "mission_over" } else { "shutdown" };
    st.commit_internal(STATION_NS, Payload::Event(EventMsg::info(reason, format!("sim time {:.3} s", st.sim.time()))));
    st.journal.sync()?;
    write_snapshot(&snapshot_path, &st.state)?;
    for c in st.conns.values() {
        let _ = c.tx.send(Outbound::Close);
    }
    listen_stop.store(true, Ordering::Relaxed);
    let _ = listener_thread.join();
    Ok(ServeOutcome { finished, report: st.sim.report(), state: st.state })
}
