//! The station wire protocol.
//!
//! One JSON object per line (or per WebSocket text frame) with exactly the
//! fields `type`, `ns`, `seq`, `t` and `payload`, in that order. `t` is
//! written with six decimals. See `docs/wire-protocol.md` and the golden
//! lines under `fixtures/wire/`.

use std::collections::BTreeMap;
use std::fmt;

use mural_core::fsm::Event;
use mural_core::math::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MsgType {
    Hello,
    Navfix,
    Telemetry,
    Command,
    Mission,
    Progress,
    Event,
    Preview,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::Hello,
        MsgType::Navfix,
        MsgType::Telemetry,
        MsgType::Command,
        MsgType::Mission,
        MsgType::Progress,
        MsgType::Event,
        MsgType::Preview,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::Navfix => "NAVFIX",
            MsgType::Telemetry => "TELEMETRY",
            MsgType::Command => "COMMAND",
            MsgType::Mission => "MISSION",
            MsgType::Progress => "PROGRESS",
            MsgType::Event => "EVENT",
            MsgType::Preview => "PREVIEW",
        }
    }

    pub fn parse(s: &str) -> Option<MsgType> {
        MsgType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Executor,
    Console,
    Station,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Executor => "executor",
            Role::Console => "console",
            Role::Station => "station",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub role: Role,
    /// Set by the station on its own HELLO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavFixMsg {
    pub u: f64,
    pub v: f64,
    pub n: f64,
    pub yaw: f64,
    /// `primary_link` or `backup_link`.
    pub source: String,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryMsg {
    pub fsm: String,
    pub battery: f64,
    pub paint_g: f64,
    pub spray_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Takeoff,
    Land,
    Pause,
    Resume,
    Goto,
    Draw,
    RebootFcu,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Takeoff => "takeoff",
            Verb::Land => "land",
            Verb::Pause => "pause",
            Verb::Resume => "resume",
            Verb::Goto => "goto",
            Verb::Draw => "draw",
            Verb::RebootFcu => "reboot_fcu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandMsg {
    pub verb: Verb,
    /// `goto` takes `[u, v, n]` in meters; every other verb takes nothing.
    #[serde(default)]
    pub args: Vec<f64>,
}

impl CommandMsg {
    pub fn new(verb: Verb) -> Self {
        CommandMsg { verb, args: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.verb {
            Verb::Goto if self.args.len() != 3 || self.args.iter().any(|a| !a.is_finite()) => Err("goto takes three finite args [u, v, n]".into()),
            Verb::Goto => Ok(()),
            v if !self.args.is_empty() => Err(format!("{} takes no args", v.as_str())),
            _ => Ok(()),
        }
    }

    /// The executor event for this command. `draw` depends on the current
    /// state and is resolved by the executor, so it maps to `None` here.
    pub fn event(&self) -> Option<Event> {
        Some(match self.verb {
            Verb::Takeoff => Event::CmdTakeoff,
            Verb::Land => Event::CmdLand,
            Verb::Pause => Event::CmdPause,
            Verb::Resume => Event::CmdResume,
            Verb::RebootFcu => Event::CmdReboot,
            Verb::Goto => Event::CmdGoto(Vec3::new(self.args[0], self.args[1], self.args[2])),
            Verb::Draw => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionMsg {
    /// Path ids per drone namespace.
    pub selections: BTreeMap<String, Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathState {
    pub id: u32,
    pub completed: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgressMsg {
    pub plan_sha256: String,
    pub current: Option<u32>,
    pub spray_s: f64,
    pub paths: Vec<PathState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Info,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventMsg {
    pub level: Level,
    pub kind: String,
    #[serde(default)]
    pub detail: String,
    /// Path ids an error refers to, e.g. conflicting selections.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<u32>,
}

impl EventMsg {
    pub fn info(kind: &str, detail: impl Into<String>) -> Self {
        EventMsg { level: Level::Info, kind: kind.into(), detail: detail.into(), ids: Vec::new() }
    }

    pub fn error(kind: &str, detail: impl Into<String>) -> Self {
        EventMsg { level: Level::Error, kind: kind.into(), detail: detail.into(), ids: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewPath {
    pub id: u32,
    pub kind: String,
    /// Drawing portion only, wall meters.
    pub points: Vec<[f64; 2]>,
}

/// Painted cells reprojected from the camera, run-length coded over all
/// cells in storage order (bottom row first, columns left to right) as
/// alternating off/on counts starting with off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    pub origin: [f64; 2],
    pub cell_m: f64,
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewMsg {
    pub wall_extent: [f64; 2],
    pub slices: BTreeMap<String, Vec<PreviewPath>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<Overlay>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Hello(Hello),
    NavFix(NavFixMsg),
    Telemetry(TelemetryMsg),
    Command(CommandMsg),
    Mission(MissionMsg),
    Progress(ProgressMsg),
    Event(EventMsg),
    Preview(PreviewMsg),
}

impl Payload {
    pub fn kind(&self) -> MsgType {
        match self {
            Payload::Hello(_) => MsgType::Hello,
            Payload::NavFix(_) => MsgType::Navfix,
            Payload::Telemetry(_) => MsgType::Telemetry,
            Payload::Command(_) => MsgType::Command,
            Payload::Mission(_) => MsgType::Mission,
            Payload::Progress(_) => MsgType::Progress,
            Payload::Event(_) => MsgType::Event,
            Payload::Preview(_) => MsgType::Preview,
        }
    }

    fn to_json(&self) -> String {
        let r = match self {
            Payload::Hello(p) => serde_json::to_string(p),
            Payload::NavFix(p) => serde_json::to_string(p),
            Payload::Telemetry(p) => serde_json::to_string(p),
            Payload::Command(p) => serde_json::to_string(p),
            Payload::Mission(p) => serde_json::to_string(p),
            Payload::Progress(p) => serde_json::to_string(p),
            Payload::Event(p) => serde_json::to_string(p),
            Payload::Preview(p) => serde_json::to_string(p),
        };
        r.expect("payloads hold only finite numbers")
    }

    fn from_value(kind: MsgType, v: serde_json::Value) -> Result<Payload, serde_json::Error> {
        Ok(match kind {
            MsgType::Hello => Payload::Hello(serde_json::from_value(v)?),
            MsgType::Navfix => Payload::NavFix(serde_json::from_value(v)?),
            MsgType::Telemetry => Payload::Telemetry(serde_json::from_value(v)?),
            MsgType::Command => Payload::Command(serde_json::from_value(v)?),
            MsgType::Mission => Payload::Mission(serde_json::from_value(v)?),
            MsgType::Progress => Payload::Progress(serde_json::from_value(v)?),
            MsgType::Event => Payload::Event(serde_json::from_value(v)?),
            MsgType::Preview => Payload::Preview(serde_json::from_value(v)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub ns: String,
    pub seq: u64,
    /// Seconds; carried with microsecond resolution.
    pub t: f64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WireError {
    #[error("not a JSON object: {0}")]
    Json(String),
    #[error("field {0:?} missing")]
    Missing(&'static str),
    #[error("unexpected field {0:?}")]
    Extra(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("bad {field}: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("bad {kind} payload: {reason}")]
    Payload { kind: MsgType, reason: String },
    #[error("{kind} seq {got} on {ns:?} does not follow {last}")]
    Sequence { ns: String, kind: MsgType, last: u64, got: u64 },
}

const FIELDS: [&str; 5] = ["type", "ns", "seq", "t", "payload"];

fn valid_ns(ns: &str) -> bool {
    !ns.is_empty() && ns.len() <= 64 && ns.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

impl WireMessage {
    pub fn new(ns: impl Into<String>, seq: u64, t: f64, payload: Payload) -> Self {
        WireMessage { ns: ns.into(), seq, t, payload }
    }

    pub fn kind(&self) -> MsgType {
        self.payload.kind()
    }

    /// One line without the trailing newline.
    pub fn encode(&self) -> String {
        format!(
            "{{\"type\":\"{}\",\"ns\":{},\"seq\":{},\"t\":{:.6},\"payload\":{}}}",
            self.kind(),
            serde_json::to_string(&self.ns).expect("string serializes"),
            self.seq,
            self.t,
            self.payload.to_json()
        )
    }

    pub fn decode(line: &str) -> Result<WireMessage, WireError> {
        let v: serde_json::Value = serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| WireError::Json(e.to_string()))?;
        let serde_json::Value::Object(mut obj) = v else {
            return Err(WireError::Json("top level must be an object".into()));
        };
        if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(WireError::Extra(k.clone()));
        }
        let kind = match obj.remove("type") {
            Some(serde_json::Value::String(s)) => MsgType::parse(&s).ok_or(WireError::UnknownType(s))?,
            Some(_) => return Err(WireError::Field { field: "type", reason: "must be a string".into() }),
            None => return Err(WireError::Missing("type")),
        };
        let ns = match obj.remove("ns") {
            Some(serde_json::Value::String(s)) if valid_ns(&s) => s,
            Some(_) => return Err(WireError::Field { field: "ns", reason: "must be 1-64 characters of [A-Za-z0-9_-]".into() }),
            None => return Err(WireError::Missing("ns")),
        };
        let seq = match obj.remove("seq") {
            Some(v) => v.as_u64().ok_or(WireError::Field { field: "seq", reason: "must be a non-negative integer".into() })?,
            None => return Err(WireError::Missing("seq")),
        };
        let t = match obj.remove("t") {
            Some(v) => v.as_f64().filter(|t| t.is_finite() && *t >= 0.0).ok_or(WireError::Field { field: "t", reason: "must be a non-negative number".into() })?,
            None => return Err(WireError::Missing("t")),
        };
        let payload = obj.remove("payload").ok_or(WireError::Missing("payload"))?;
        let payload = Payload::from_value(kind, payload).map_err(|e| WireError::Payload { kind, reason: e.to_string() })?;
        match &payload {
            Payload::Command(c) => c.validate().map_err(|reason| WireError::Payload { kind, reason })?,
            Payload::NavFix(f) if !(f.source == "primary_link" || f.source == "backup_link") => {
                return Err(WireError::Payload { kind, reason: format!("unknown source {:?}", f.source) })
            }
            _ => {}
        }
        // microsecond resolution on the wire
        let t = (t * 1e6).round() / 1e6;
        Ok(WireMessage { ns, seq, t, payload })
    }
}

/// Enforces strictly increasing `seq` per (namespace, type).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeqCheck {
    last: BTreeMap<(String, MsgType), u64>,
}

impl SeqCheck {
    pub fn check(&mut self, msg: &WireMessage) -> Result<(), WireError> {
        let key = (msg.ns.clone(), msg.kind());
        match self.last.get(&key) {
            Some(last) if msg.seq <= *last => Err(WireError::Sequence { ns: msg.ns.clone(), kind: msg.kind(), last: *last, got: msg.seq }),
            _ => {
                self.last.insert(key, msg.seq);
                Ok(())
            }
        }
    }
}

/// Hands out sequence numbers per (namespace, type), starting at 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeqGen {
    next: BTreeMap<(String, MsgType), u64>,
}

impl SeqGen {
    pub fn stamp(&mut self, ns: &str, t: f64, payload: Payload) -> WireMessage {
        let n = self.next.entry((ns.to_string(), payload.kind())).or_insert(0);
        *n += 1;
        WireMessage { ns: ns.to_string(), seq: *n, t: (t * 1e6).round() / 1e6, payload }
    }

    /// Continues after `seq` for the given stream.
    pub fn resume(&mut self, ns: &str, kind: MsgType, seq: u64) {
        let n = self.next.entry((ns.to_string(), kind)).or_insert(0);
        *n = (*n).max(seq);
    }
}
