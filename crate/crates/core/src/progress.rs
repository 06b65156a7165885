//! Per-path mission progress and its line-oriented text record.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::compiler::MissionPlan;

pub const PROGRESS_MAGIC: &str = "mural-progress";
pub const PROGRESS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathProgress {
    /// Painted arc length along the drawing portion, meters.
    pub completed: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissionProgress {
    pub paths: BTreeMap<u32, PathProgress>,
    pub current: Option<u32>,
    pub spray_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgressError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("progress belongs to plan {found}, expected {expected}")]
    PlanMismatch { expected: String, found: String },
    #[error("path ids differ from the plan (unknown: {unknown:?}, missing: {missing:?})")]
    IdMismatch { unknown: Vec<u32>, missing: Vec<u32> },
    #[error("path {id}: completed {completed} m exceeds drawing length {length} m")]
    Overrun { id: u32, completed: f64, length: f64 },
}

impl MissionProgress {
    pub fn new(plan: &MissionPlan) -> Self {
        MissionProgress {
            paths: plan.paths.iter().map(|p| (p.id, PathProgress::default())).collect(),
            current: None,
            spray_seconds: 0.0,
        }
    }

    pub fn get(&self, id: u32) -> PathProgress {
        self.paths.get(&id).copied().unwrap_or_default()
    }

    /// Raises the completed length of a path; never lowers it.
    pub fn advance(&mut self, id: u32, completed: f64) {
        let e = self.paths.entry(id).or_default();
        if completed > e.completed {
            e.completed = completed;
        }
    }

    pub fn mark_done(&mut self, id: u32, drawing_len: f64) {
        let e = self.paths.entry(id).or_default();
        e.completed = e.completed.max(drawing_len);
        e.done = true;
    }

    /// Explicit operator reset of one path.
    pub fn reset(&mut self, id: u32) {
        if let Some(e) = self.paths.get_mut(&id) {
            *e = PathProgress::default();
        }
    }

    /// First path in plan order that is not done.
    pub fn next_pending(&self, plan: &MissionPlan) -> Option<u32> {
        plan.paths.iter().map(|p| p.id).find(|id| !self.get(*id).done)
    }

    pub fn pending_count(&self, plan: &MissionPlan) -> usize {
        plan.paths.iter().filter(|p| !self.get(p.id).done).count()
    }

    pub fn done_ids(&self) -> Vec<u32> {
        self.paths.iter().filter(|(_, p)| p.done).map(|(id, _)| *id).collect()
    }

    /// Text record: a versioned header with the plan hash, then one
    /// `progress <path_id> <completed_m> <done>` line per path.
    pub fn to_record(&self, plan_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{PROGRESS_MAGIC} {PROGRESS_VERSION}");
        let _ = writeln!(s, "plan {plan_hash}");
        let _ = writeln!(s, "spray_s {}", self.spray_seconds);
        match self.current {
            Some(id) => {
                let _ = writeln!(s, "current {id}");
            }
            None => s.push_str("current -\n"),
        }
        for (id, p) in &self.paths {
            let _ = writeln!(s, "progress {id} {} {}", p.completed, p.done);
        }
        s
    }

    /// Parses a record and checks it against the plan it claims to belong to.
    pub fn from_record(record: &str, plan: &MissionPlan, plan_hash: &str) -> Result<Self, ProgressError> {
        let bad = |line: usize, reason: &str| ProgressError::Malformed { line, reason: String::from(reason) };
        let mut lines = record.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let (n, header) = lines.next().ok_or_else(|| bad(1, "empty record"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some(PROGRESS_MAGIC) {
            return Err(bad(n, "missing progress header"));
        }
        match h.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(PROGRESS_VERSION) => {}
            _ => return Err(bad(n, "unsupported progress version")),
        }
        let mut out = MissionProgress::default();
        let mut seen_plan = None;
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["plan", hash] => seen_plan = Some(String::from(*hash)),
                ["spray_s", v] => out.spray_seconds = v.parse().map_err(|_| bad(n, "bad spray_s"))?,
                ["current", "-"] => out.current = None,
                ["current", id] => out.current = Some(id.parse().map_err(|_| bad(n, "bad current id"))?),
                ["progress", id, c, d] => {
                    let id: u32 = id.parse().map_err(|_| bad(n, "bad path id"))?;
                    let completed: f64 = c.parse().map_err(|_| bad(n, "bad completed length"))?;
                    let done = match *d {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad(n, "done must be true or false")),
                    };
                    if !(completed >= 0.0) {
                        return Err(bad(n, "completed length must be non-negative"));
                    }
                    if out.paths.insert(id, PathProgress { completed, done }).is_some() {
                        return Err(ProgressError::Malformed { line: n, reason: format!("duplicate path {id}") });
                    }
                }
                _ => return Err(bad(n, "unrecognized line")),
            }
        }
        match seen_plan {
            Some(h) if h == plan_hash => {}
            Some(h) => return Err(ProgressError::PlanMismatch { expected: String::from(plan_hash), found: h }),
            None => return Err(bad(0, "missing plan line")),
        }
        let unknown: Vec<u32> = out.paths.keys().copied().filter(|id| plan.path(*id).is_none()).collect();
        let missing: Vec<u32> = plan.paths.iter().map(|p| p.id).filter(|id| !out.paths.contains_key(id)).collect();
        if !unknown.is_empty() || !missing.is_empty() {
            return Err(ProgressError::IdMismatch { unknown, missing });
        }
        for (id, p) in &out.paths {
            let length = plan.path(*id).map(|p| p.drawing_len()).unwrap_or(0.0);
            if p.completed > length + 1e-9 {
                return Err(ProgressError::Overrun { id: *id, completed: p.completed, length });
            }
        }
        if let Some(c) = out.current {
            if plan.path(c).is_none() {
                return Err(ProgressError::IdMismatch { unknown: alloc::vec![c], missing: Vec::new() });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{CompileParams, PaintPath, PathKind};
    use crate::math::Vec2;
    use alloc::vec;

    fn plan() -> MissionPlan {
        let mk = |id: u32, y: f64| PaintPath {
            id,
            kind: PathKind::Outline,
            points: vec![Vec2::new(0.0, y), Vec2::new(1.0, y)],
            lead_in_len: 0.0,
            lead_out_len: 0.0,
        };
        MissionPlan { paths: vec![mk(1, 0.0), mk(2, 0.5), mk(3, 1.0)], wall_extent: (1.0, 1.0), params: CompileParams::default() }
    }

    #[test]
    fn record_round_trip_is_byte_identical() {
        let p = plan();
        let mut prog = MissionProgress::new(&p);
        prog.advance(2, 0.123456789012345);
        prog.mark_done(1, 1.0);
        prog.current = Some(2);
        prog.spray_seconds = 41.25;
        let rec = prog.to_record("abc");
        let back = MissionProgress::from_record(&rec, &p, "abc").unwrap();
        assert_eq!(back, prog);
        assert_eq!(back.to_record("abc"), rec);
    }

    #[test]
    fn unknown_path_rejected() {
        let p = plan();
        let rec = MissionProgress::new(&p).to_record("abc") + "progress 9 0 false\n";
        match MissionProgress::from_record(&rec, &p, "abc") {
            Err(ProgressError::IdMismatch { unknown, missing }) => {
                assert_eq!(unknown, vec![9]);
                assert!(missing.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_path_and_hash_mismatch() {
        let p = plan();
        let rec: String = MissionProgress::new(&p)
            .to_record("abc")
            .lines()
            .filter(|l| !l.starts_with("progress 3"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            MissionProgress::from_record(&rec, &p, "abc"),
            Err(ProgressError::IdMismatch { ref missing, .. }) if missing == &vec![3]
        ));
        let rec = MissionProgress::new(&p).to_record("abc");
        assert!(matches!(MissionProgress::from_record(&rec, &p, "xyz"), Err(ProgressError::PlanMismatch { .. })));
    }

    #[test]
    fn advance_is_monotone() {
        let mut prog = MissionProgress::new(&plan());
        prog.advance(1, 0.4);
        prog.advance(1, 0.2);
        assert_eq!(prog.get(1).completed, 0.4);
        prog.reset(1);
        assert_eq!(prog.get(1).completed, 0.0);
    }

    #[test]
    fn next_pending_follows_plan_order() {
        let p = plan();
        let mut prog = MissionProgress::new(&p);
        prog.mark_done(1, 1.0);
        assert_eq!(prog.next_pending(&p), Some(2));
        assert_eq!(prog.pending_count(&p), 2);
    }
}
