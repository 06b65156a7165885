//! SVG drawing to ordered, kinematically executable paint paths.
//!
//! The pipeline is `parse_svg` -> `join_split_segments` -> `prune_short_paths`
//! -> `add_lead_in_out` (+ `generate_infill` for filled regions) ->
//! `order_paths`. [`compile`] runs all of it.

mod infill;
mod order;
mod polyline;
mod svg;

use alloc::string::String;
use alloc::vec::Vec;

use crate::math::Vec2;
#[allow(unused_imports)]
use crate::math::Float;

pub use infill::generate_infill;
pub use order::{band_index, order_paths, travel_length};
pub use polyline::{add_lead_in_out, join_split_segments, prune_short_paths, turn_angle_deg};
pub use svg::{parse_svg, ParsedSvg};

/// Distance under which two endpoints count as touching.
pub const JOIN_TOL: f64 = 1e-3;
/// Minimum separation between consecutive vertices.
pub const MIN_VERTEX_SEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("invalid SVG: {0}")]
    Xml(String),
    #[error("unsupported SVG element <{0}>")]
    UnsupportedElement(String),
    #[error("unsupported path command '{0}'")]
    UnsupportedCommand(char),
    #[error("unsupported attribute '{attr}' on <{element}>")]
    UnsupportedAttribute { element: String, attr: String },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: &'static str },
    #[error("odd number of contour crossings on scanline v = {v:.6}")]
    OddCrossings { v: f64 },
    #[error("no drawable elements")]
    NoDrawableElements,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileParams {
    /// Straight lead-in/lead-out length added to both path ends (m).
    pub extension_len: f64,
    /// Largest tangent turn (degrees) treated as a smooth continuation.
    pub join_angle_max: f64,
    /// Open paths shorter than this are dropped (m).
    pub min_path_len: f64,
    /// Maximum chord deviation when flattening curves (m).
    pub flatten_tol: f64,
    /// Distance between infill scanlines (m).
    pub infill_spacing: f64,
    /// Infill spans shorter than this are ignored (m).
    pub infill_min_span: f64,
    /// Height of the bottom-to-top ordering bands (m).
    pub band_height: f64,
    /// SVG user units to meters.
    pub scale: f64,
    /// Generate infill for closed, filled contours.
    pub fill_closed: bool,
}

impl Default for CompileParams {
    fn default() -> Self {
        CompileParams {
            extension_len: 0.30,
            join_angle_max: 30.0,
            min_path_len: 0.04,
            flatten_tol: 0.005,
            infill_spacing: 0.02,
            infill_min_span: 0.005,
            band_height: 0.5,
            scale: 0.01,
            fill_closed: true,
        }
    }
}

impl CompileParams {
    pub fn validate(&self) -> Result<(), CompileError> {
        let positive = [
            ("flatten_tol", self.flatten_tol),
            ("min_path_len", self.min_path_len),
            ("infill_spacing", self.infill_spacing),
            ("infill_min_span", self.infill_min_span),
            ("band_height", self.band_height),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CompileError::InvalidParam { name, reason: "must be a positive length" });
            }
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(CompileError::InvalidParam { name: "scale", reason: "must be positive" });
        }
        if !(self.extension_len >= 0.0) || !self.extension_len.is_finite() {
            return Err(CompileError::InvalidParam { name: "extension_len", reason: "must be non-negative" });
        }
        if !(self.join_angle_max > 0.0 && self.join_angle_max < 180.0) {
            return Err(CompileError::InvalidParam { name: "join_angle_max", reason: "must lie in (0, 180)" });
        }
        Ok(())
    }
}

/// Flattened polyline in wall meters. A closed polyline's last vertex
/// connects back to the first; the first vertex is not repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl Polyline {
    pub fn open(points: Vec<Vec2>) -> Self {
        Polyline { points, closed: false }
    }

    pub fn length(&self) -> f64 {
        let open: f64 = self.points.windows(2).map(|w| w[0].dist(w[1])).sum();
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + a.dist(*b),
            _ => open,
        }
    }
}

/// Closed rings of one SVG element, filled with the even-odd rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub rings: Vec<Vec<Vec2>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PathKind {
    Outline,
    Infill,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Outline => "outline",
            PathKind::Infill => "infill",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "outline" => Some(PathKind::Outline),
            "infill" => Some(PathKind::Infill),
            _ => None,
        }
    }
}

/// One executable stroke. `points` include the straight lead-in and lead-out
/// extensions; the drawing portion is the arc interval
/// `[lead_in_len, length - lead_out_len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaintPath {
    pub id: u32,
    pub kind: PathKind,
    pub points: Vec<Vec2>,
    pub lead_in_len: f64,
    pub lead_out_len: f64,
}

impl PaintPath {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn drawing_len(&self) -> f64 {
        (self.length() - self.lead_in_len - self.lead_out_len).max(0.0)
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    pub fn lowest_v(&self) -> f64 {
        self.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min)
    }

    /// Same stroke traversed in the opposite direction.
    pub fn reversed(&self) -> PaintPath {
        let mut points = self.points.clone();
        points.reverse();
        PaintPath {
            id: self.id,
            kind: self.kind,
            points,
            lead_in_len: self.lead_out_len,
            lead_out_len: self.lead_in_len,
        }
    }

    /// Cumulative arc length at each vertex.
    pub fn arc_table(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.points.len());
        out.push(0.0);
        for w in self.points.windows(2) {
            acc += w[0].dist(w[1]);
            out.push(acc);
        }
        out
    }

    /// Point and unit tangent at arc position `s` (clamped to the path).
    pub fn sample(&self, s: f64) -> (Vec2, Vec2) {
        let arcs = self.arc_table();
        sample_with_table(&self.points, &arcs, s)
    }

    /// Vertices of the drawing portion, with the interval ends interpolated.
    pub fn drawing_points(&self) -> Vec<Vec2> {
        let arcs = self.arc_table();
        let total = arcs[arcs.len() - 1];
        let (s0, s1) = (self.lead_in_len, total - self.lead_out_len);
        let mut out = Vec::new();
        if s1 <= s0 {
            return out;
        }
        out.push(sample_with_table(&self.points, &arcs, s0).0);
        for (p, &s) in self.points.iter().zip(&arcs) {
            if s > s0 + MIN_VERTEX_SEP && s < s1 - MIN_VERTEX_SEP {
                out.push(*p);
            }
        }
        out.push(sample_with_table(&self.points, &arcs, s1).0);
        out
    }

    /// Path that re-enters this stroke `completed` meters into its drawing
    /// portion, with a fresh straight lead-in of `extension_len` aligned to
    /// the local tangent.
    pub fn resume_from(&self, completed: f64, extension_len: f64) -> PaintPath {
        let arcs = self.arc_table();
        let s_resume = self.lead_in_len + completed.max(0.0);
        let (p, t) = sample_with_table(&self.points, &arcs, s_resume);
        let mut points = Vec::with_capacity(self.points.len() + 2);
        if extension_len > 0.0 {
            points.push(p - t * extension_len);
        }
        points.push(p);
        for (q, &s) in self.points.iter().zip(&arcs) {
            if s > s_resume + MIN_VERTEX_SEP {
                points.push(*q);
            }
        }
        PaintPath {
            id: self.id,
            kind: self.kind,
            points,
            lead_in_len: extension_len,
            lead_out_len: self.lead_out_len,
        }
    }
}

pub(crate) fn sample_with_table(points: &[Vec2], arcs: &[f64], s: f64) -> (Vec2, Vec2) {
    let n = points.len();
    if n < 2 {
        return (points.first().copied().unwrap_or(Vec2::ZERO), Vec2::new(1.0, 0.0));
    }
    let total = arcs[n - 1];
    let s = s.clamp(0.0, total);
    // index of the segment containing s
    let mut i = match arcs.binary_search_by(|a| a.total_cmp(&s)) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i >= n - 1 {
        i = n - 2;
    }
    let seg = arcs[i + 1] - arcs[i];
    let dir = (points[i + 1] - points[i]).normalized();
    let f = if seg > 0.0 { (s - arcs[i]) / seg } else { 0.0 };
    (points[i].lerp(points[i + 1], f), dir)
}

/// Ordered, preprocessed mission.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub paths: Vec<PaintPath>,
    /// (width, height) in meters.
    pub wall_extent: (f64, f64),
    pub params: CompileParams,
}

impl MissionPlan {
    pub fn path(&self, id: u32) -> Option<&PaintPath> {
        self.paths.iter().find(|p| p.id == id)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.paths.iter().map(|p| p.id).collect()
    }

    pub fn total_drawing_len(&self) -> f64 {
        self.paths.iter().map(PaintPath::drawing_len).sum()
    }

    pub fn travel_len(&self) -> f64 {
        travel_length(&self.paths, None)
    }

    pub fn is_band_monotone(&self) -> bool {
        let bh = self.params.band_height;
        self.paths
            .windows(2)
            .all(|w| band_index(w[0].lowest_v(), bh) <= band_index(w[1].lowest_v(), bh))
    }
}

/// Summary numbers reported by the compiler front ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileReport {
    pub path_count: usize,
    pub outline_count: usize,
    pub infill_count: usize,
    pub drawing_len: f64,
    pub travel_len: f64,
}

impl MissionPlan {
    pub fn report(&self) -> CompileReport {
        let infill_count = self.paths.iter().filter(|p| p.kind == PathKind::Infill).count();
        CompileReport {
            path_count: self.paths.len(),
            outline_count: self.paths.len() - infill_count,
            infill_count,
            drawing_len: self.total_drawing_len(),
            travel_len: self.travel_len(),
        }
    }
}

/// Full SVG-to-plan compilation.
pub fn compile(document: &str, params: &CompileParams) -> Result<MissionPlan, CompileError> {
    params.validate()?;
    let parsed = parse_svg(document, params)?;
    if parsed.polylines.is_empty() {
        return Err(CompileError::NoDrawableElements);
    }
    let joined = join_split_segments(parsed.polylines, params);
    let kept = prune_short_paths(joined, params);

    let mut paths = Vec::new();
    for pl in &kept {
        let mut p = add_lead_in_out(pl, params);
        p.kind = PathKind::Outline;
        paths.push(p);
    }
    if params.fill_closed {
        for region in &parsed.regions {
            paths.extend(generate_infill(region, params)?);
        }
    }
    for (i, p) in paths.iter_mut().enumerate() {
        p.id = i as u32 + 1;
    }
    let ordered = order_paths(paths, params.band_height, Vec2::ZERO);
    Ok(MissionPlan { paths: ordered, wall_extent: parsed.extent, params: *params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn straight() -> PaintPath {
        PaintPath {
            id: 1,
            kind: PathKind::Outline,
            points: vec![Vec2::new(-0.3, 0.0), Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.3, 0.0)],
            lead_in_len: 0.3,
            lead_out_len: 0.3,
        }
    }

    #[test]
    fn drawing_points_strip_leads() {
        let p = straight();
        let d = p.drawing_points();
        assert_eq!(d, vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
        assert!((p.drawing_len() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversal_swaps_leads() {
        let mut p = straight();
        p.lead_out_len = 0.1;
        p.points[3] = Vec2::new(1.1, 0.0);
        let r = p.reversed();
        assert_eq!(r.lead_in_len, 0.1);
        assert_eq!(r.start(), Vec2::new(1.1, 0.0));
        assert_eq!(r.drawing_points(), vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0)]);
    }

    #[test]
    fn resume_adds_fresh_lead_in() {
        let p = straight();
        let r = p.resume_from(0.4, 0.3);
        assert!((r.start() - Vec2::new(0.1, 0.0)).norm() < 1e-12);
        assert!((r.lead_in_len - 0.3).abs() < 1e-12);
        let d = r.drawing_points();
        assert!((d[0] - Vec2::new(0.4, 0.0)).norm() < 1e-12);
        assert!((d[d.len() - 1] - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sampling_clamps() {
        let p = straight();
        assert_eq!(p.sample(-5.0).0, Vec2::new(-0.3, 0.0));
        assert_eq!(p.sample(50.0).0, Vec2::new(1.3, 0.0));
        let (q, t) = p.sample(0.8);
        assert!((q - Vec2::new(0.5, 0.0)).norm() < 1e-12);
        assert_eq!(t, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn params_validation() {
        assert!(CompileParams::default().validate().is_ok());
        let bad = CompileParams { scale: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(CompileError::InvalidParam { name: "scale", .. })));
        let bad = CompileParams { join_angle_max: 180.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn compile_square_with_infill() {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" width="100" height="100">
            <rect x="0" y="0" width="100" height="100"/></svg>"#;
        let plan = compile(svg, &CompileParams { infill_spacing: 0.25, ..Default::default() }).unwrap();
        let r = plan.report();
        assert_eq!(r.outline_count, 4);
        assert_eq!(r.infill_count, 4);
        assert!(plan.is_band_monotone());
        let mut ids = plan.ids();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), plan.paths.len());
    }

    #[test]
    fn compile_is_deterministic() {
        let svg = r#"<svg width="300" height="200"><path d="M 10 10 C 50 150 150 150 200 20 L 250 120"/>
            <polygon points="20,180 80,120 140,180"/></svg>"#;
        let a = compile(svg, &CompileParams::default()).unwrap();
        let b = compile(svg, &CompileParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_document_rejected() {
        let svg = r#"<svg width="10" height="10"></svg>"#;
        assert_eq!(compile(svg, &CompileParams::default()), Err(CompileError::NoDrawableElements));
    }
}
