//! Minimal SVG 1.1 reader: `path` (M L H V C Q Z, absolute and relative),
//! `line`, `polyline`, `polygon` and `rect`, inside `svg`/`g` containers.
//!
//! Coordinates are scaled to meters and flipped so that `v` points up.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{CompileError, CompileParams, Polyline, Region, MIN_VERTEX_SEP};
use crate::math::Vec2;
#[allow(unused_imports)]
use crate::math::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSvg {
    /// Every subpath, open or closed, in document order.
    pub polylines: Vec<Polyline>,
    /// Closed subpaths grouped per fillable element.
    pub regions: Vec<Region>,
    /// (width, height) of the drawing area in meters.
    pub extent: (f64, f64),
}

/// Maps SVG user coordinates to wall meters.
#[derive(Debug, Clone, Copy)]
struct Mapping {
    min_x: f64,
    min_y: f64,
    height: f64,
    scale: f64,
}

impl Mapping {
    fn apply(&self, p: Vec2) -> Vec2 {
        Vec2::new((p.x - self.min_x) * self.scale, (self.min_y + self.height - p.y) * self.scale)
    }
}

const CONTAINERS: &[&str] = &["svg", "g"];
const IGNORED: &[&str] = &["title", "desc", "metadata", "defs", "style"];
const SHAPES: &[&str] = &["path", "line", "polyline", "polygon", "rect"];

pub fn parse_svg(document: &str, params: &CompileParams) -> Result<ParsedSvg, CompileError> {
    if !(params.scale > 0.0) || !params.scale.is_finite() {
        return Err(CompileError::InvalidParam { name: "scale", reason: "must be positive" });
    }
    let doc = roxmltree::Document::parse(document).map_err(|e| CompileError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(CompileError::UnsupportedElement(root.tag_name().name().to_string()));
    }

    // First pass: collect raw subpaths in user units.
    let mut shapes: Vec<RawShape> = Vec::new();
    collect(root, &mut shapes)?;

    let (doc_w, doc_h, min_x, min_y) = document_box(root, &shapes)?;
    let map = Mapping { min_x, min_y, height: doc_h, scale: params.scale };

    let mut polylines = Vec::new();
    let mut regions = Vec::new();
    for shape in &shapes {
        let mut rings = Vec::new();
        for sub in &shape.subpaths {
            let pts = flatten(&sub.segments, sub.start, &map, params.flatten_tol);
            let mut pts = dedup(pts);
            if sub.closed && pts.len() > 1 && pts[0].dist(pts[pts.len() - 1]) <= MIN_VERTEX_SEP {
                pts.pop();
            }
            if pts.len() < 2 {
                continue;
            }
            if sub.closed && pts.len() >= 3 {
                rings.push(pts.clone());
                polylines.push(Polyline { points: pts, closed: true });
            } else {
                polylines.push(Polyline::open(pts));
            }
        }
        if shape.fillable && !rings.is_empty() {
            regions.push(Region { rings });
        }
    }
    Ok(ParsedSvg { polylines, regions, extent: (doc_w * params.scale, doc_h * params.scale) })
}

#[derive(Debug, Clone, Copy)]
enum Seg {
    Line(Vec2),
    Quad(Vec2, Vec2),
    Cubic(Vec2, Vec2, Vec2),
}

impl Seg {
    /// Control and end points.
    fn points(&self) -> impl Iterator<Item = Vec2> {
        let (a, b, c) = match *self {
            Seg::Line(p) => (p, p, p),
            Seg::Quad(c, p) => (c, p, p),
            Seg::Cubic(c1, c2, p) => (c1, c2, p),
        };
        [a, b, c].into_iter()
    }

    fn end(&self) -> Vec2 {
        match *self {
            Seg::Line(p) | Seg::Quad(_, p) | Seg::Cubic(_, _, p) => p,
        }
    }
}

#[derive(Debug, Clone)]
struct Subpath {
    start: Vec2,
    segments: Vec<Seg>,
    closed: bool,
}

#[derive(Debug, Clone)]
struct RawShape {
    subpaths: Vec<Subpath>,
    fillable: bool,
}

fn collect(node: roxmltree::Node<'_, '_>, out: &mut Vec<RawShape>) -> Result<(), CompileError> {
    for child in node.children().filter(|c| c.is_element()) {
        let name = child.tag_name().name();
        if IGNORED.contains(&name) {
            continue;
        }
        if child.has_attribute("transform") {
            return Err(CompileError::UnsupportedAttribute { element: name.to_string(), attr: "transform".into() });
        }
        if CONTAINERS.contains(&name) {
            collect(child, out)?;
            continue;
        }
        if !SHAPES.contains(&name) {
            return Err(CompileError::UnsupportedElement(name.to_string()));
        }
        let fillable = child.attribute("fill").map_or(true, |f| f.trim() != "none");
        let subpaths = match name {
            "path" => parse_path_data(child.attribute("d").unwrap_or(""))?,
            "line" => {
                let a = Vec2::new(num_attr(child, "x1")?, num_attr(child, "y1")?);
                let b = Vec2::new(num_attr(child, "x2")?, num_attr(child, "y2")?);
                alloc::vec![Subpath { start: a, segments: alloc::vec![Seg::Line(b)], closed: false }]
            }
            "polyline" | "polygon" => {
                let pts = parse_points(child.attribute("points").unwrap_or(""))?;
                if pts.is_empty() {
                    Vec::new()
                } else {
                    alloc::vec![Subpath {
                        start: pts[0],
                        segments: pts[1..].iter().map(|&p| Seg::Line(p)).collect(),
                        closed: name == "polygon",
                    }]
                }
            }
            "rect" => {
                for r in ["rx", "ry"] {
                    if child.attribute(r).and_then(|v| v.trim().parse::<f64>().ok()).is_some_and(|v| v != 0.0) {
                        return Err(CompileError::UnsupportedAttribute { element: "rect".into(), attr: r.into() });
                    }
                }
                let x = opt_num_attr(child, "x")?.unwrap_or(0.0);
                let y = opt_num_attr(child, "y")?.unwrap_or(0.0);
                let w = num_attr(child, "width")?;
                let h = num_attr(child, "height")?;
                if w <= 0.0 || h <= 0.0 {
                    Vec::new()
                } else {
                    alloc::vec![Subpath {
                        start: Vec2::new(x, y),
                        segments: alloc::vec![
                            Seg::Line(Vec2::new(x + w, y)),
                            Seg::Line(Vec2::new(x + w, y + h)),
                            Seg::Line(Vec2::new(x, y + h)),
                        ],
                        closed: true,
                    }]
                }
            }
            _ => unreachable!(),
        };
        out.push(RawShape { subpaths, fillable });
    }
    Ok(())
}

/// (width, height, min_x, min_y) of the document in user units.
fn document_box(root: roxmltree::Node<'_, '_>, shapes: &[RawShape]) -> Result<(f64, f64, f64, f64), CompileError> {
    if let Some(vb) = root.attribute("viewBox") {
        let v = parse_numbers(vb)?;
        if v.len() != 4 || v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(CompileError::Malformed { what: "viewBox", detail: vb.to_string() });
        }
        return Ok((v[2], v[3], v[0], v[1]));
    }
    let w = length_attr(root, "width")?;
    let h = length_attr(root, "height")?;
    let (mut max_x, mut max_y) = (0.0f64, 0.0f64);
    for s in shapes {
        for sp in &s.subpaths {
            for p in core::iter::once(sp.start).chain(sp.segments.iter().flat_map(Seg::points)) {
                max_x = max_x.max(p.x);
                max_y = max_y.max(p.y);
            }
        }
    }
    Ok((w.unwrap_or(max_x), h.unwrap_or(max_y), 0.0, 0.0))
}

fn length_attr(node: roxmltree::Node<'_, '_>, name: &str) -> Result<Option<f64>, CompileError> {
    match node.attribute(name) {
        None => Ok(None),
        Some(raw) => {
            let t = raw.trim();
            let t = t.strip_suffix("px").unwrap_or(t);
            t.trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| CompileError::Malformed { what: "length attribute", detail: raw.to_string() })
        }
    }
}

fn opt_num_attr(node: roxmltree::Node<'_, '_>, name: &str) -> Result<Option<f64>, CompileError> {
    length_attr(node, name)
}

fn num_attr(node: roxmltree::Node<'_, '_>, name: &str) -> Result<f64, CompileError> {
    opt_num_attr(node, name)?.ok_or_else(|| CompileError::Malformed {
        what: "missing attribute",
        detail: alloc::format!("<{}> needs '{}'", node.tag_name().name(), name),
    })
}

fn parse_numbers(s: &str) -> Result<Vec<f64>, CompileError> {
    let mut lex = Lexer::new(s);
    let mut out = Vec::new();
    while lex.skip_separators() {
        out.push(lex.number()?);
    }
    Ok(out)
}

fn parse_points(s: &str) -> Result<Vec<Vec2>, CompileError> {
    let nums = parse_numbers(s)?;
    if nums.len() % 2 != 0 {
        return Err(CompileError::Malformed { what: "points", detail: s.to_string() });
    }
    Ok(nums.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

struct Lexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(s: &'a str) -> Self {
        Lexer { s: s.as_bytes(), pos: 0 }
    }

    /// Skips whitespace and commas; returns whether input remains.
    fn skip_separators(&mut self) -> bool {
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_whitespace() || self.s[self.pos] == b',') {
            self.pos += 1;
        }
        self.pos < self.s.len()
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn starts_number(&self) -> bool {
        matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.')
    }

    fn number(&mut self) -> Result<f64, CompileError> {
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
            i += 1;
        }
        let mut seen_dot = false;
        let mut digits = 0;
        while i < s.len() && (s[i].is_ascii_digit() || (s[i] == b'.' && !seen_dot)) {
            if s[i] == b'.' {
                seen_dot = true;
            } else {
                digits += 1;
            }
            i += 1;
        }
        if digits == 0 {
            return Err(self.error(start));
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos = i;
        core::str::from_utf8(&s[start..i])
            .ok()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| self.error(start))
    }

    fn error(&self, at: usize) -> CompileError {
        let tail = &self.s[at..self.s.len().min(at + 16)];
        CompileError::Malformed {
            what: "number",
            detail: String::from_utf8_lossy(tail).into_owned(),
        }
    }
}

fn parse_path_data(d: &str) -> Result<Vec<Subpath>, CompileError> {
    let mut lex = Lexer::new(d);
    let mut subs: Vec<Subpath> = Vec::new();
    let mut cur = Vec2::ZERO;
    let mut start = Vec2::ZERO;
    let mut cmd: Option<u8> = None;

    loop {
        if !lex.skip_separators() {
            break;
        }
        let c = lex.peek().unwrap_or(b' ');
        if c.is_ascii_alphabetic() {
            lex.pos += 1;
            cmd = Some(c);
            if !b"MmLlHhVvCcQqZz".contains(&c) {
                return Err(CompileError::UnsupportedCommand(c as char));
            }
            if c == b'Z' || c == b'z' {
                if let Some(sp) = subs.last_mut() {
                    sp.closed = true;
                }
                cur = start;
                // A new drawing command after Z starts from the subpath start.
                cmd = None;
                continue;
            }
        } else if cmd.is_none() {
            return Err(CompileError::Malformed { what: "path data", detail: d.to_string() });
        }
        let c = cmd.unwrap_or(b'L');
        let rel = c.is_ascii_lowercase();
        let base = if rel { cur } else { Vec2::ZERO };
        let pt = |lex: &mut Lexer<'_>| -> Result<Vec2, CompileError> {
            lex.skip_separators();
            let x = lex.number()?;
            lex.skip_separators();
            let y = lex.number()?;
            Ok(Vec2::new(x, y))
        };
        match c.to_ascii_uppercase() {
            b'M' => {
                let p = base + pt(&mut lex)?;
                cur = p;
                start = p;
                subs.push(Subpath { start: p, segments: Vec::new(), closed: false });
                // Subsequent coordinate pairs are implicit line-tos.
                cmd = Some(if rel { b'l' } else { b'L' });
            }
            b'L' => {
                let p = base + pt(&mut lex)?;
                push_seg(&mut subs, cur, Seg::Line(p));
                cur = p;
            }
            b'H' => {
                lex.skip_separators();
                let x = lex.number()?;
                let p = Vec2::new(if rel { cur.x + x } else { x }, cur.y);
                push_seg(&mut subs, cur, Seg::Line(p));
                cur = p;
            }
            b'V' => {
                lex.skip_separators();
                let y = lex.number()?;
                let p = Vec2::new(cur.x, if rel { cur.y + y } else { y });
                push_seg(&mut subs, cur, Seg::Line(p));
                cur = p;
            }
            b'C' => {
                let c1 = base + pt(&mut lex)?;
                let c2 = base + pt(&mut lex)?;
                let p = base + pt(&mut lex)?;
                push_seg(&mut subs, cur, Seg::Cubic(c1, c2, p));
                cur = p;
            }
            b'Q' => {
                let c1 = base + pt(&mut lex)?;
                let p = base + pt(&mut lex)?;
                push_seg(&mut subs, cur, Seg::Quad(c1, p));
                cur = p;
            }
            _ => unreachable!(),
        }
        // Guard against garbage that is neither a command nor a number.
        if lex.skip_separators() && !lex.starts_number() && !lex.peek().is_some_and(|b| b.is_ascii_alphabetic()) {
            return Err(CompileError::Malformed { what: "path data", detail: d.to_string() });
        }
    }
    Ok(subs)
}

fn push_seg(subs: &mut Vec<Subpath>, cur: Vec2, seg: Seg) {
    match subs.last_mut() {
        Some(sp) if !sp.closed => sp.segments.push(seg),
        _ => subs.push(Subpath { start: cur, segments: alloc::vec![seg], closed: false }),
    }
}

fn flatten(segs: &[Seg], start: Vec2, map: &Mapping, tol: f64) -> Vec<Vec2> {
    let mut out = alloc::vec![map.apply(start)];
    let mut cur = start;
    for seg in segs {
        match *seg {
            Seg::Line(p) => out.push(map.apply(p)),
            Seg::Quad(c, p) => {
                // Exact degree elevation keeps a single subdivision routine.
                let c1 = cur + (c - cur) * (2.0 / 3.0);
                let c2 = p + (c - p) * (2.0 / 3.0);
                flatten_cubic(map.apply(cur), map.apply(c1), map.apply(c2), map.apply(p), tol, 0, &mut out);
            }
            Seg::Cubic(c1, c2, p) => {
                flatten_cubic(map.apply(cur), map.apply(c1), map.apply(c2), map.apply(p), tol, 0, &mut out)
            }
        }
        cur = seg.end();
    }
    out
}

fn point_segment_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sq();
    if l2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / l2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Recursive de Casteljau subdivision. The control polygon's distance from
/// the chord bounds the curve's deviation, so stopping below `tol` keeps the
/// polyline within `tol` of the exact curve.
fn flatten_cubic(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2, tol: f64, depth: u32, out: &mut Vec<Vec2>) {
    let flat = point_segment_dist(p1, p0, p3).max(point_segment_dist(p2, p0, p3));
    if flat < tol || depth >= 24 {
        out.push(p3);
        return;
    }
    let p01 = p0.lerp(p1, 0.5);
    let p12 = p1.lerp(p2, 0.5);
    let p23 = p2.lerp(p3, 0.5);
    let p012 = p01.lerp(p12, 0.5);
    let p123 = p12.lerp(p23, 0.5);
    let mid = p012.lerp(p123, 0.5);
    flatten_cubic(p0, p01, p012, mid, tol, depth + 1, out);
    flatten_cubic(mid, p123, p23, p3, tol, depth + 1, out);
}

fn dedup(points: Vec<Vec2>) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::with_capacity(points.len());
    for p in points {
        if out.last().is_none_or(|q| q.dist(p) > MIN_VERTEX_SEP) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CompileParams {
        CompileParams { scale: 0.01, ..Default::default() }
    }

    fn svg(body: &str) -> alloc::string::String {
        alloc::format!(r#"<svg xmlns="http://www.w3.org/2000/svg">{body}</svg>"#)
    }

    #[test]
    fn single_line() {
        let p = parse_svg(&svg(r#"<path d="M 0 0 L 100 0"/>"#), &params()).unwrap();
        assert_eq!(p.polylines.len(), 1);
        assert!(!p.polylines[0].closed);
        assert_eq!(p.polylines[0].points, alloc::vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
    }

    #[test]
    fn rect_is_closed_unit_square() {
        let doc = r#"<svg width="100" height="100"><rect x="0" y="0" width="100" height="100"/></svg>"#;
        let p = parse_svg(doc, &params()).unwrap();
        assert_eq!(p.polylines.len(), 1);
        let pl = &p.polylines[0];
        assert!(pl.closed);
        assert_eq!(pl.points.len(), 4);
        assert!((pl.length() - 4.0).abs() < 1e-12);
        // y-down (0,0) becomes the top-left corner at v = 1.
        assert_eq!(pl.points[0], Vec2::new(0.0, 1.0));
        assert_eq!(p.regions.len(), 1);
        assert_eq!(p.extent, (1.0, 1.0));
    }

    #[test]
    fn cubic_flattening_within_tolerance() {
        let params = params();
        let p = parse_svg(&svg(r#"<path d="M 0 0 C 0 100 100 100 100 0"/>"#), &params).unwrap();
        let poly = &p.polylines[0].points;
        // Without a declared size the flip uses the control hull's max y (100).
        let exact = |t: f64| {
            let mt = 1.0 - t;
            let x = 3.0 * mt * t * t * 100.0 + t * t * t * 100.0;
            let y = 3.0 * mt * mt * t * 100.0 + 3.0 * mt * t * t * 100.0;
            Vec2::new(x * 0.01, (100.0 - y) * 0.01)
        };
        let max_dev = (0..=1000)
            .map(|i| {
                let q = exact(i as f64 / 1000.0);
                poly.windows(2).map(|w| point_segment_dist(q, w[0], w[1])).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!(max_dev < params.flatten_tol, "deviation {max_dev}");
        assert!(poly.len() > 4);
    }

    #[test]
    fn relative_and_implicit_commands() {
        let p = parse_svg(&svg(r#"<path d="m10,10 20,0 0,20 h -20 v-20 z"/>"#), &params()).unwrap();
        assert_eq!(p.polylines.len(), 1);
        let pl = &p.polylines[0];
        assert!(pl.closed);
        assert_eq!(pl.points.len(), 4);
        assert!((pl.length() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn quadratic_supported() {
        let p = parse_svg(&svg(r#"<path d="M0 0 Q 50 100 100 0"/>"#), &params()).unwrap();
        assert!(p.polylines[0].points.len() > 3);
    }

    #[test]
    fn unsupported_element_named() {
        let e = parse_svg(&svg(r#"<circle cx="1" cy="1" r="3"/>"#), &params()).unwrap_err();
        assert_eq!(e, CompileError::UnsupportedElement("circle".into()));
        let e = parse_svg(&svg(r#"<text>hi</text>"#), &params()).unwrap_err();
        assert_eq!(e, CompileError::UnsupportedElement("text".into()));
    }

    #[test]
    fn unsupported_command_and_transform() {
        let e = parse_svg(&svg(r#"<path d="M0 0 A 5 5 0 0 1 10 10"/>"#), &params()).unwrap_err();
        assert_eq!(e, CompileError::UnsupportedCommand('A'));
        let e = parse_svg(&svg(r#"<g transform="scale(2)"><path d="M0 0 L1 1"/></g>"#), &params()).unwrap_err();
        assert!(matches!(e, CompileError::UnsupportedAttribute { .. }));
    }

    #[test]
    fn bad_scale_rejected() {
        let e = parse_svg(&svg(""), &CompileParams { scale: -1.0, ..Default::default() }).unwrap_err();
        assert!(matches!(e, CompileError::InvalidParam { name: "scale", .. }));
    }

    #[test]
    fn multiple_subpaths_form_one_region() {
        let p = parse_svg(
            &svg(r#"<path d="M0 0 H100 V100 H0 Z M25 25 H75 V75 H25 Z"/>"#),
            &params(),
        )
        .unwrap();
        assert_eq!(p.polylines.len(), 2);
        assert_eq!(p.regions.len(), 1);
        assert_eq!(p.regions[0].rings.len(), 2);
    }

    #[test]
    fn fill_none_is_not_a_region() {
        let p = parse_svg(&svg(r#"<polygon fill="none" points="0,0 10,0 10,10"/>"#), &params()).unwrap();
        assert_eq!(p.polylines.len(), 1);
        assert!(p.regions.is_empty());
    }

    #[test]
    fn viewbox_origin_and_flip() {
        let doc = r#"<svg viewBox="10 20 100 50"><line x1="10" y1="70" x2="110" y2="20"/></svg>"#;
        let p = parse_svg(doc, &params()).unwrap();
        assert_eq!(p.polylines[0].points, alloc::vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.5)]);
        assert_eq!(p.extent, (1.0, 0.5));
    }
}
