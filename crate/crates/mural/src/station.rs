//! Ground-station state, its write-ahead journal and snapshots.
//!
//! `StationState::apply` is the only way the persisted state changes. The
//! live service journals every message before applying it, so replaying a
//! journal through a fresh state reproduces the service's state exactly.
//! NAVFIX and PREVIEW carry no state and are never journaled.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use mural_core::progress::{MissionProgress, PathProgress};
use serde::{Deserialize, Serialize};

use crate::wire::{EventMsg, MsgType, Payload, ProgressMsg, Role, WireError, WireMessage};

pub const JOURNAL_MAGIC: &str = "mural-journal";
pub const JOURNAL_VERSION: u32 = 1;
pub const SNAPSHOT_MAGIC: &str = "mural-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const STATION_NS: &str = "station";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Telemetry {
    pub t: f64,
    pub fsm: String,
    pub battery: f64,
    pub paint_g: f64,
    pub spray_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub role: Role,
    pub online: bool,
    pub telemetry: Option<Telemetry>,
    pub commands: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub completed: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Progress {
    pub current: Option<u32>,
    pub spray_s: f64,
    pub paths: BTreeMap<u32, PathRecord>,
}

impl Progress {
    pub fn to_mission_progress(&self) -> MissionProgress {
        MissionProgress {
            paths: self.paths.iter().map(|(id, p)| (*id, PathProgress { completed: p.completed, done: p.done })).collect(),
            current: self.current,
            spray_seconds: self.spray_s,
        }
    }

    pub fn done_ids(&self) -> Vec<u32> {
        self.paths.iter().filter(|(_, p)| p.done).map(|(id, _)| *id).collect()
    }
}

/// Everything the station persists.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationState {
    pub plan_sha256: String,
    /// Journal records applied so far.
    pub records: u64,
    pub starts: u64,
    pub last_t: f64,
    /// Last sequence number per namespace and message type.
    pub seqs: BTreeMap<String, BTreeMap<MsgType, u64>>,
    pub sessions: BTreeMap<String, Session>,
    pub assignment: BTreeMap<String, Vec<u32>>,
    pub progress: BTreeMap<String, Progress>,
    pub events: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Reject {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("time {got} is before {last}")]
    TimeBackwards { last: f64, got: f64 },
    #[error("namespace {0:?} is already connected")]
    NamespaceTaken(String),
    #[error("no executor session {0:?}")]
    UnknownExecutor(String),
    #[error("{0} messages are not journaled")]
    NotJournaled(MsgType),
    #[error("plan {found} does not match the station plan {expected}")]
    PlanMismatch { expected: String, found: String },
    #[error("paths selected more than once: {0:?}")]
    Overlap(Vec<u32>),
    #[error("{0}")]
    Invalid(String),
}

impl StationState {
    pub fn last_seq(&self, ns: &str, kind: MsgType) -> u64 {
        self.seqs.get(ns).and_then(|m| m.get(&kind)).copied().unwrap_or(0)
    }

    fn executor(&self, ns: &str) -> Result<(), Reject> {
        match self.sessions.get(ns) {
            Some(s) if s.role == Role::Executor => Ok(()),
            _ => Err(Reject::UnknownExecutor(ns.to_string())),
        }
    }

    /// Validates a message against the state without changing it.
    pub fn check(&self, msg: &WireMessage) -> Result<(), Reject> {
        let last = self.last_seq(&msg.ns, msg.kind());
        if msg.seq <= last {
            return Err(WireError::Sequence { ns: msg.ns.clone(), kind: msg.kind(), last, got: msg.seq }.into());
        }
        if msg.t < self.last_t {
            return Err(Reject::TimeBackwards { last: self.last_t, got: msg.t });
        }
        match &msg.payload {
            Payload::NavFix(_) | Payload::Preview(_) => Err(Reject::NotJournaled(msg.kind())),
            Payload::Hello(h) => match h.role {
                Role::Station => {
                    if msg.ns != STATION_NS {
                        return Err(Reject::Invalid(format!("station HELLO must use namespace {STATION_NS:?}")));
                    }
                    match &h.plan_sha256 {
                        None => Err(Reject::Invalid("station HELLO without plan hash".into())),
                        Some(p) if !self.plan_sha256.is_empty() && *p != self.plan_sha256 => {
                            Err(Reject::PlanMismatch { expected: self.plan_sha256.clone(), found: p.clone() })
                        }
                        Some(_) => Ok(()),
                    }
                }
                role => {
                    if msg.ns == STATION_NS {
                        return Err(Reject::NamespaceTaken(msg.ns.clone()));
                    }
                    match self.sessions.get(&msg.ns) {
                        Some(s) if s.online || s.role != role => Err(Reject::NamespaceTaken(msg.ns.clone())),
                        _ => Ok(()),
                    }
                }
            },
            Payload::Telemetry(_) | Payload::Command(_) => self.executor(&msg.ns),
            Payload::Progress(p) => {
                self.executor(&msg.ns)?;
                if p.plan_sha256 != self.plan_sha256 {
                    return Err(Reject::PlanMismatch { expected: self.plan_sha256.clone(), found: p.plan_sha256.clone() });
                }
                Ok(())
            }
            Payload::Mission(m) => {
                if msg.ns != STATION_NS {
                    return Err(Reject::Invalid(format!("MISSION is issued by {STATION_NS:?}")));
                }
                let mut seen = BTreeSet::new();
                let mut dup = BTreeSet::new();
                for (ns, ids) in &m.selections {
                    self.executor(ns)?;
                    for id in ids {
                        if !seen.insert(*id) {
                            dup.insert(*id);
                        }
                    }
                }
                if dup.is_empty() {
                    Ok(())
                } else {
                    Err(Reject::Overlap(dup.into_iter().collect()))
                }
            }
            Payload::Event(_) => Ok(()),
        }
    }

    pub fn apply(&mut self, msg: &WireMessage) -> Result<(), Reject> {
        self.check(msg)?;
        self.seqs.entry(msg.ns.clone()).or_default().insert(msg.kind(), msg.seq);
        self.last_t = msg.t;
        self.records += 1;
        match &msg.payload {
            Payload::Hello(h) if h.role == Role::Station => {
                self.plan_sha256 = h.plan_sha256.clone().unwrap_or_default();
                self.starts += 1;
                for s in self.sessions.values_mut() {
                    s.online = false;
                }
            }
            Payload::Hello(h) => {
                let s = self.sessions.entry(msg.ns.clone()).or_insert(Session { role: h.role, online: true, telemetry: None, commands: 0 });
                s.online = true;
            }
            Payload::Telemetry(m) => {
                let s = self.sessions.get_mut(&msg.ns).expect("checked");
                s.telemetry = Some(Telemetry { t: msg.t, fsm: m.fsm.clone(), battery: m.battery, paint_g: m.paint_g, spray_s: m.spray_s });
            }
            Payload::Command(_) => self.sessions.get_mut(&msg.ns).expect("checked").commands += 1,
            Payload::Mission(m) => self.assignment = m.selections.clone(),
            Payload::Progress(p) => merge_progress(self.progress.entry(msg.ns.clone()).or_default(), p),
            Payload::Event(e) => {
                self.events += 1;
                if e.level == crate::wire::Level::Error {
                    self.errors += 1;
                }
                if e.kind == "disconnect" {
                    if let Some(s) = self.sessions.get_mut(&msg.ns) {
                        s.online = false;
                    }
                }
            }
            Payload::NavFix(_) | Payload::Preview(_) => unreachable!("rejected by check"),
        }
        Ok(())
    }

    /// Canonical snapshot bytes.
    pub fn snapshot_text(&self) -> String {
        format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}\n{}\n", serde_json::to_string_pretty(self).expect("state serializes"))
    }

    pub fn from_snapshot_text(text: &str) -> Result<StationState, StationError> {
        let (header, body) = text.split_once('\n').ok_or_else(|| StationError::Format("empty snapshot".into()))?;
        if header != format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}") {
            return Err(StationError::Format(format!("unsupported snapshot header {header:?}")));
        }
        serde_json::from_str(body).map_err(|e| StationError::Format(format!("snapshot: {e}")))
    }
}

/// Completed lengths only grow and done paths stay done, so a stale report
/// from a restarted executor never erases recorded work.
fn merge_progress(into: &mut Progress, p: &ProgressMsg) {
    into.current = p.current;
    into.spray_s = into.spray_s.max(p.spray_s);
    for ps in &p.paths {
        let e = into.paths.entry(ps.id).or_insert(PathRecord { completed: 0.0, done: false });
        e.completed = e.completed.max(ps.completed);
        e.done |= ps.done;
    }
}

pub fn progress_msg(p: &MissionProgress, plan_sha256: &str) -> ProgressMsg {
    ProgressMsg {
        plan_sha256: plan_sha256.to_string(),
        current: p.current,
        spray_s: p.spray_seconds,
        paths: p.paths.iter().map(|(id, q)| crate::wire::PathState { id: *id, completed: q.completed, done: q.done }).collect(),
    }
}

pub fn disconnect_event() -> Payload {
    Payload::Event(EventMsg::info("disconnect", ""))
}

#[derive(Debug, thiserror::Error)]
pub enum StationError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("journal record {record}: {reason}")]
    Replay { record: u64, reason: Reject },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StationError + '_ {
    move |source| StationError::Io { path: path.to_path_buf(), source }
}

fn journal_header() -> String {
    format!("{JOURNAL_MAGIC} {JOURNAL_VERSION}\n")
}

/// Parses journal text. A final line without its newline is an interrupted
/// append and is dropped; the returned length covers the intact prefix.
pub fn parse_journal(text: &str) -> Result<(Vec<WireMessage>, usize), StationError> {
    let header = journal_header();
    if !text.starts_with(&header) {
        let first = text.lines().next().unwrap_or("");
        return Err(StationError::Format(format!("unsupported journal header {first:?}")));
    }
    let mut out = Vec::new();
    let mut pos = header.len();
    while pos < text.len() {
        let Some(end) = text[pos..].find('\n') else { break };
        let line = &text[pos..pos + end];
        let msg = WireMessage::decode(line).map_err(|e| StationError::Format(format!("journal record {}: {e}", out.len() + 1)))?;
        out.push(msg);
        pos += end + 1;
    }
    Ok((out, pos))
}

pub fn read_journal(path: &Path) -> Result<Vec<WireMessage>, StationError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    Ok(parse_journal(&text)?.0)
}

/// Applies every record to a fresh state.
pub fn replay(records: &[WireMessage]) -> Result<StationState, StationError> {
    let mut st = StationState::default();
    for (k, m) in records.iter().enumerate() {
        st.apply(m).map_err(|reason| StationError::Replay { record: k as u64 + 1, reason })?;
    }
    Ok(st)
}

/// Append-only journal file. Each record reaches the OS in one write
/// before the caller applies it.
pub struct Journal {
    file: File,
    path: PathBuf,
    records: u64,
}

impl Journal {
    /// Opens or creates a journal, returning the records already in it.
    pub fn open(path: &Path) -> Result<(Journal, Vec<WireMessage>), StationError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io(path))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io(path))?;
        let records = if text.is_empty() {
            file.write_all(journal_header().as_bytes()).map_err(io(path))?;
            file.sync_data().map_err(io(path))?;
            Vec::new()
        } else {
            let (records, intact) = parse_journal(&text)?;
            if intact < text.len() {
                file.set_len(intact as u64).map_err(io(path))?;
                file.seek(SeekFrom::End(0)).map_err(io(path))?;
            }
            records
        };
        let n = records.len() as u64;
        Ok((Journal { file, path: path.to_path_buf(), records: n }, records))
    }

    pub fn append(&mut self, msg: &WireMessage) -> Result<(), StationError> {
        let mut line = msg.encode();
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io(&self.path))?;
        self.records += 1;
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), StationError> {
        self.file.sync_data().map_err(io(&self.path))
    }

    pub fn records(&self) -> u64 {
        self.records
    }
}

pub fn write_snapshot(path: &Path, state: &StationState) -> Result<(), StationError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io(&tmp))?;
        f.write_all(state.snapshot_text().as_bytes()).map_err(io(&tmp))?;
        f.sync_all().map_err(io(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io(path))?;
    if let Some(dir) = path.parent() {
        // make the rename itself durable; not every platform allows this
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<StationState, StationError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    StationState::from_snapshot_text(&text)
}

pub const JOURNAL_FILE: &str = "journal.log";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Rebuilds state from a state directory: the snapshot, if any, plus the
/// journal records after it.
pub fn recover(dir: &Path) -> Result<(StationState, Journal), StationError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let (journal, records) = Journal::open(&dir.join(JOURNAL_FILE))?;
    let snap = dir.join(SNAPSHOT_FILE);
    let mut state = if snap.exists() { read_snapshot(&snap)? } else { StationState::default() };
    if state.records > records.len() as u64 {
        return Err(StationError::Format(format!("snapshot covers {} records but the journal has {}", state.records, records.len())));
    }
    for (k, m) in records.iter().enumerate().skip(state.records as usize) {
        state.apply(m).map_err(|reason| StationError::Replay { record: k as u64 + 1, reason })?;
    }
    Ok((state, journal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{CommandMsg, Hello, MissionMsg, PathState, SeqGen, TelemetryMsg, Verb};

    fn hello(role: Role) -> Payload {
        Payload::Hello(Hello { role, plan_sha256: None })
    }

    fn station_hello() -> Payload {
        Payload::Hello(Hello { role: Role::Station, plan_sha256: Some("abc".into()) })
    }

    fn prog(ids: &[(u32, f64, bool)]) -> Payload {
        Payload::Progress(ProgressMsg {
            plan_sha256: "abc".into(),
            current: None,
            spray_s: 1.0,
            paths: ids.iter().map(|(id, c, d)| PathState { id: *id, completed: *c, done: *d }).collect(),
        })
    }

    fn script() -> Vec<WireMessage> {
        let mut g = SeqGen::default();
        vec![
            g.stamp(STATION_NS, 0.0, station_hello()),
            g.stamp("d1", 0.0, hello(Role::Executor)),
            g.stamp("d2", 0.0, hello(Role::Executor)),
            g.stamp(STATION_NS, 0.0, Payload::Mission(MissionMsg { selections: [("d1".to_string(), vec![1, 2]), ("d2".to_string(), vec![3])].into() })),
            g.stamp("d1", 0.5, Payload::Command(CommandMsg::new(Verb::Takeoff))),
            g.stamp("d1", 1.0, Payload::Telemetry(TelemetryMsg { fsm: "Drawing".into(), battery: 0.9, paint_g: 400.0, spray_s: 2.0 })),
            g.stamp("d1", 2.0, prog(&[(1, 0.5, true), (2, 0.1, false)])),
        ]
    }

    #[test]
    fn namespaces_are_unique_while_online() {
        let mut st = replay(&script()).unwrap();
        let again = WireMessage::new("d1", 2, 3.0, hello(Role::Executor));
        assert_eq!(st.apply(&again), Err(Reject::NamespaceTaken("d1".into())));
        let console = WireMessage::new("c1", 1, 3.0, hello(Role::Console));
        st.apply(&console).unwrap();
        let gone = WireMessage::new("d1", 1, 3.0, disconnect_event());
        st.apply(&gone).unwrap();
        st.apply(&again).unwrap();
        assert!(st.apply(&WireMessage::new(STATION_NS, 5, 3.0, hello(Role::Console))).is_err());
    }

    #[test]
    fn done_paths_survive_stale_reports() {
        let mut st = replay(&script()).unwrap();
        st.apply(&WireMessage::new("d1", 2, 3.0, prog(&[(1, 0.0, false), (2, 0.0, false)]))).unwrap();
        assert_eq!(st.progress["d1"].done_ids(), vec![1]);
        assert_eq!(st.progress["d1"].paths[&2].completed, 0.1);
    }

    #[test]
    fn rejections_leave_state_untouched() {
        let mut st = replay(&script()).unwrap();
        let before = st.clone();
        let bad = [
            WireMessage::new("d1", 1, 3.0, Payload::Command(CommandMsg::new(Verb::Land))),
            WireMessage::new("d1", 9, 0.5, Payload::Command(CommandMsg::new(Verb::Land))),
            WireMessage::new("d9", 1, 3.0, Payload::Command(CommandMsg::new(Verb::Land))),
            WireMessage::new(STATION_NS, 9, 3.0, Payload::Mission(MissionMsg { selections: [("d1".to_string(), vec![1]), ("d2".to_string(), vec![1])].into() })),
            WireMessage::new(STATION_NS, 9, 3.0, Payload::Hello(Hello { role: Role::Station, plan_sha256: Some("other".into()) })),
        ];
        for m in &bad {
            assert!(st.apply(m).is_err(), "{m:?}");
        }
        assert_eq!(st, before);
        let err = st.apply(&bad[3]).unwrap_err();
        assert_eq!(err, Reject::Overlap(vec![1]));
    }

    #[test]
    fn snapshot_round_trips() {
        let st = replay(&script()).unwrap();
        let text = st.snapshot_text();
        assert!(text.starts_with("mural-snapshot 1\n"));
        let back = StationState::from_snapshot_text(&text).unwrap();
        assert_eq!(back, st);
        assert_eq!(back.snapshot_text(), text);
        assert!(StationState::from_snapshot_text("mural-snapshot 2\n{}").is_err());
    }

    #[test]
    fn torn_tail_is_dropped_and_recovery_matches_replay() {
        let dir = tempfile::tempdir().unwrap();
        let msgs = script();
        {
            let (mut j, old) = Journal::open(&dir.path().join(JOURNAL_FILE)).unwrap();
            assert!(old.is_empty());
            let mut st = StationState::default();
            for (k, m) in msgs.iter().enumerate() {
                j.append(m).unwrap();
                st.apply(m).unwrap();
                if k == 3 {
                    write_snapshot(&dir.path().join(SNAPSHOT_FILE), &st).unwrap();
                }
            }
        }
        // an append cut short by a crash
        let jp = dir.path().join(JOURNAL_FILE);
        let mut f = OpenOptions::new().append(true).open(&jp).unwrap();
        f.write_all(b"{\"type\":\"COMM").unwrap();
        drop(f);
        let (st, j) = recover(dir.path()).unwrap();
        assert_eq!(j.records(), msgs.len() as u64);
        assert_eq!(st.snapshot_text(), replay(&read_journal(&jp).unwrap()).unwrap().snapshot_text());
        assert_eq!(st, replay(&msgs).unwrap());
        assert!(!std::fs::read_to_string(&jp).unwrap().ends_with("COMM"));
    }

    #[test]
    fn foreign_journal_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(JOURNAL_FILE);
        std::fs::write(&p, "something else\n").unwrap();
        assert!(Journal::open(&p).is_err());
    }
}
