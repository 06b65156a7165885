//! Mission plan and compile-parameter files.
//!
//! A plan is a JSON document; its SHA-256 is the plan hash that progress
//! records and reports refer to. Parameters are TOML with every key
//! optional and unknown keys rejected.

use std::path::Path;

use mural_core::compiler::{CompileParams, MissionPlan, PaintPath, PathKind};
use mural_core::math::Vec2;
use serde::{Deserialize, Serialize};

use crate::{sha256_hex, FormatError};

pub const PLAN_FORMAT: &str = "mural-plan";
pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsFile {
    pub extension_len: f64,
    pub join_angle_max: f64,
    pub min_path_len: f64,
    pub flatten_tol: f64,
    pub infill_spacing: f64,
    pub infill_min_span: f64,
    pub band_height: f64,
    pub scale: f64,
    pub fill_closed: bool,
}

impl Default for ParamsFile {
    fn default() -> Self {
        ParamsFile::from(&CompileParams::default())
    }
}

impl From<&CompileParams> for ParamsFile {
    fn from(p: &CompileParams) -> Self {
        ParamsFile {
            extension_len: p.extension_len,
            join_angle_max: p.join_angle_max,
            min_path_len: p.min_path_len,
            flatten_tol: p.flatten_tol,
            infill_spacing: p.infill_spacing,
            infill_min_span: p.infill_min_span,
            band_height: p.band_height,
            scale: p.scale,
            fill_closed: p.fill_closed,
        }
    }
}

impl From<&ParamsFile> for CompileParams {
    fn from(p: &ParamsFile) -> Self {
        CompileParams {
            extension_len: p.extension_len,
            join_angle_max: p.join_angle_max,
            min_path_len: p.min_path_len,
            flatten_tol: p.flatten_tol,
            infill_spacing: p.infill_spacing,
            infill_min_span: p.infill_min_span,
            band_height: p.band_height,
            scale: p.scale,
            fill_closed: p.fill_closed,
        }
    }
}

pub fn parse_params(text: &str) -> Result<CompileParams, FormatError> {
    let file: ParamsFile = toml::from_str(text).map_err(|e| FormatError::Params(e.message().to_string()))?;
    let params = CompileParams::from(&file);
    params.validate().map_err(|e| FormatError::Params(e.to_string()))?;
    Ok(params)
}

pub fn params_to_toml(params: &CompileParams) -> String {
    toml::to_string(&ParamsFile::from(params)).expect("plain struct serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathRecord {
    id: u32,
    kind: String,
    lead_in_len: f64,
    lead_out_len: f64,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanRecord {
    format: String,
    version: u32,
    /// SHA-256 of the SVG the plan was compiled from.
    source_sha256: String,
    params: ParamsFile,
    wall_extent: [f64; 2],
    paths: Vec<PathRecord>,
}

/// A plan together with the hash of its source drawing.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDoc {
    pub plan: MissionPlan,
    pub source_sha256: String,
}

impl PlanDoc {
    pub fn to_json(&self) -> String {
        let rec = PlanRecord {
            format: PLAN_FORMAT.into(),
            version: PLAN_VERSION,
            source_sha256: self.source_sha256.clone(),
            params: ParamsFile::from(&self.plan.params),
            wall_extent: [self.plan.wall_extent.0, self.plan.wall_extent.1],
            paths: self
                .plan
                .paths
                .iter()
                .map(|p| PathRecord {
                    id: p.id,
                    kind: p.kind.as_str().into(),
                    lead_in_len: p.lead_in_len,
                    lead_out_len: p.lead_out_len,
                    points: p.points.iter().map(|q| [q.x, q.y]).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&rec).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<PlanDoc, FormatError> {
        let rec: PlanRecord = serde_json::from_str(text).map_err(|e| FormatError::Plan(e.to_string()))?;
        if rec.format != PLAN_FORMAT || rec.version != PLAN_VERSION {
            return Err(FormatError::Plan(format!("expected {PLAN_FORMAT} version {PLAN_VERSION}, found {} version {}", rec.format, rec.version)));
        }
        let mut paths = Vec::with_capacity(rec.paths.len());
        for p in rec.paths {
            let kind = PathKind::parse(&p.kind).ok_or_else(|| FormatError::Plan(format!("path {}: unknown kind {:?}", p.id, p.kind)))?;
            if p.points.len() < 2 {
                return Err(FormatError::Plan(format!("path {}: fewer than two points", p.id)));
            }
            paths.push(PaintPath {
                id: p.id,
                kind,
                points: p.points.iter().map(|q| Vec2::new(q[0], q[1])).collect(),
                lead_in_len: p.lead_in_len,
                lead_out_len: p.lead_out_len,
            });
        }
        let mut ids: Vec<u32> = paths.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(FormatError::Plan("duplicate path id".into()));
        }
        Ok(PlanDoc {
            plan: MissionPlan { paths, wall_extent: (rec.wall_extent[0], rec.wall_extent[1]), params: CompileParams::from(&rec.params) },
            source_sha256: rec.source_sha256,
        })
    }

    /// Hash of the serialized plan.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

pub fn read_plan(path: &Path) -> Result<PlanDoc, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    PlanDoc::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mural_core::compiler::compile;

    const SVG: &str = r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 100 100">
        <rect x="10" y="10" width="30" height="20"/>
        <path d="M 10 80 C 30 60, 60 90, 90 70" fill="none"/>
    </svg>"#;

    #[test]
    fn plan_round_trips_exactly() {
        let doc = PlanDoc { plan: compile(SVG, &CompileParams::default()).unwrap(), source_sha256: sha256_hex(SVG.as_bytes()) };
        let text = doc.to_json();
        let back = PlanDoc::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.hash(), doc.hash());
    }

    #[test]
    fn wrong_format_rejected() {
        let doc = PlanDoc { plan: compile(SVG, &CompileParams::default()).unwrap(), source_sha256: String::new() };
        let text = doc.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(PlanDoc::from_json(&text).is_err());
        assert!(PlanDoc::from_json("{}").is_err());
    }

    #[test]
    fn params_defaults_and_overrides() {
        assert_eq!(parse_params("").unwrap(), CompileParams::default());
        let p = parse_params("extension_len = 0.2\nfill_closed = false\n").unwrap();
        assert_eq!(p.extension_len, 0.2);
        assert!(!p.fill_closed);
        assert_eq!(parse_params(&params_to_toml(&p)).unwrap(), p);
    }

    #[test]
    fn unknown_param_key_is_named() {
        let e = parse_params("extension_length = 0.3\n").unwrap_err().to_string();
        assert!(e.contains("extension_length"), "{e}");
        let e = parse_params("scale = -1.0\n").unwrap_err().to_string();
        assert!(e.contains("scale"), "{e}");
    }
}
