//! Binary portable graymaps (P5), 8 or 16 bit, with `#` comment lines in
//! the header. Rows are stored top to bottom; rasters from the simulator
//! have row 0 at the bottom of the wall and are flipped on the way out.

use mural_core::sim::canvas::{Canvas, Grid, Raster};

use crate::FormatError;

/// Canvas cells at exactly the paint threshold map to this value.
pub const CANVAS_UNIT: f64 = 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub comments: Vec<String>,
    /// Row-major, top row first.
    pub data: Vec<u16>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.data.len() * 2);
        out.extend_from_slice(b"P5\n");
        for c in &self.comments {
            debug_assert!(!c.contains('\n'));
            out.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        out.extend_from_slice(format!("{} {}\n{}\n", self.width, self.height, self.maxval).as_bytes());
        if self.maxval < 256 {
            out.extend(self.data.iter().map(|v| *v as u8));
        } else {
            for v in &self.data {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Pgm, FormatError> {
        let bad = |why: &str| FormatError::Pgm(why.to_string());
        let mut pos = 0;
        let mut comments = Vec::new();
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos >= bytes.len() {
                return Err(bad("truncated header"));
            }
            if bytes[pos] == b'#' {
                let end = bytes[pos..].iter().position(|b| *b == b'\n').map_or(bytes.len(), |k| pos + k);
                let text = std::str::from_utf8(&bytes[pos + 1..end]).map_err(|_| bad("comment is not UTF-8"))?;
                comments.push(text.strip_prefix(' ').unwrap_or(text).to_string());
                pos = end;
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?.to_string());
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary graymap (P5)"));
        }
        let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad {what} {s:?}")));
        let width = num(&fields[1], "width")?;
        let height = num(&fields[2], "height")?;
        let maxval = num(&fields[3], "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(bad("maxval out of range"));
        }
        // exactly one whitespace byte separates the header from the data
        pos += 1;
        let n = width.checked_mul(height).ok_or_else(|| bad("image too large"))?;
        let body = bytes.get(pos..).unwrap_or(&[]);
        let data: Vec<u16> = if maxval < 256 {
            if body.len() != n {
                return Err(bad(&format!("expected {n} data bytes, found {}", body.len())));
            }
            body.iter().map(|b| u16::from(*b)).collect()
        } else {
            if body.len() != 2 * n {
                return Err(bad(&format!("expected {} data bytes, found {}", 2 * n, body.len())));
            }
            body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        };
        if data.iter().any(|v| usize::from(*v) > maxval) {
            return Err(bad("sample exceeds maxval"));
        }
        Ok(Pgm { width, height, maxval: maxval as u16, comments, data })
    }

    /// Cells at or above half the range count as painted.
    pub fn to_mask(&self) -> Vec<bool> {
        let half = (u32::from(self.maxval) + 1) / 2;
        self.data.iter().map(|v| u32::from(*v) >= half).collect()
    }

    /// Value of a `key value` comment line.
    pub fn comment(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| c.strip_prefix(key).and_then(|r| r.strip_prefix(' ')).map(str::trim))
    }
}

fn flip<T: Copy>(grid: &Grid, cells: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(cells.len());
    for row in (0..grid.height).rev() {
        out.extend_from_slice(&cells[row * grid.width..(row + 1) * grid.width]);
    }
    out
}

fn grid_comments(grid: &Grid) -> Vec<String> {
    vec![format!("origin_m {} {}", grid.origin.x, grid.origin.y), format!("cell_m {}", grid.cell)]
}

/// 16-bit deposition map: value = mass / threshold * 32768, saturating.
pub fn canvas_pgm(canvas: &Canvas, threshold: f64, mut comments: Vec<String>) -> Pgm {
    let values: Vec<u16> = canvas.mass.iter().map(|m| (m / threshold * CANVAS_UNIT).floor().clamp(0.0, 65535.0) as u16).collect();
    comments.extend(grid_comments(&canvas.grid));
    comments.push(format!("threshold_g {threshold}"));
    Pgm { width: canvas.grid.width, height: canvas.grid.height, maxval: 65535, comments, data: flip(&canvas.grid, &values) }
}

pub fn raster_pgm(raster: &Raster, mut comments: Vec<String>) -> Pgm {
    let values: Vec<u16> = raster.cells.iter().map(|c| u16::from(*c)).collect();
    comments.extend(grid_comments(&raster.grid));
    Pgm { width: raster.grid.width, height: raster.grid.height, maxval: 1, comments, data: flip(&raster.grid, &values) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mural_core::math::Vec2;

    #[test]
    fn sixteen_bit_round_trip() {
        let p = Pgm { width: 3, height: 2, maxval: 65535, comments: vec!["a b".into(), "plan_sha256 ff".into()], data: vec![0, 1, 256, 32768, 65535, 7] };
        let back = Pgm::decode(&p.encode()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.comment("plan_sha256"), Some("ff"));
        assert_eq!(back.to_mask(), vec![false, false, false, true, true, false]);
    }

    #[test]
    fn binary_round_trip_and_flip() {
        let grid = Grid { origin: Vec2::new(0.0, 0.0), cell: 0.5, width: 2, height: 2 };
        let r = Raster { grid, cells: vec![true, false, false, false] };
        let p = raster_pgm(&r, vec![]);
        // bottom-left cell lands in the last row of the file
        assert_eq!(p.data, vec![0, 0, 1, 0]);
        let back = Pgm::decode(&p.encode()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn threshold_survives_quantization() {
        let grid = Grid { origin: Vec2::new(0.0, 0.0), cell: 0.1, width: 4, height: 1 };
        let c = Canvas { grid, mass: vec![0.0, 0.999_99, 1.0, 3.0] };
        let p = canvas_pgm(&c, 1.0, vec![]);
        assert_eq!(p.to_mask(), vec![false, false, true, true]);
    }

    #[test]
    fn malformed_rejected() {
        assert!(Pgm::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Pgm::decode(b"P5\n2 2\n255\n\x00").is_err());
        assert!(Pgm::decode(b"P5\n1 1\n1\n\x02").is_err());
        assert!(Pgm::decode(b"P5\n1").is_err());
    }
}
