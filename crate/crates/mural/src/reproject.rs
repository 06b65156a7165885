//! Mapping a camera frame back onto the wall plane.
//!
//! The plane n = 0 and the image are related by a homography built from
//! the calibrated camera. `render_view` synthesizes what the true camera
//! sees of the simulated canvas; `reproject` undoes it with the estimated
//! camera, which is what the operator compares against the plan.

use mural_core::geom::{CameraModel, WallFrame};
use mural_core::math::{Mat3, Vec2, Vec3};
use mural_core::sim::canvas::{Canvas, Grid, Raster};

use crate::wire::Overlay;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Mat3);

impl Homography {
    pub fn apply(&self, p: Vec2) -> Option<Vec2> {
        let h = self.0.mul_vec(Vec3::new(p.x, p.y, 1.0));
        (h.z.abs() > 1e-12).then(|| Vec2::new(h.x / h.z, h.y / h.z))
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.0.inverse().map(Homography)
    }
}

/// Wall (u, v) on the plane n = 0 to image pixels.
pub fn wall_to_image(cam: &CameraModel, wall: &WallFrame) -> Homography {
    let k = Mat3::from_rows([cam.focal_px, 0.0, cam.principal_point.x], [0.0, cam.focal_px, cam.principal_point.y], [0.0, 0.0, 1.0]);
    let rt = cam.rotation.transpose();
    let m = Mat3::from_cols(rt.mul_vec(wall.u_axis), rt.mul_vec(wall.v_axis), rt.mul_vec(wall.origin - cam.position));
    Homography(k.mul_mat(&m))
}

/// Grayscale frame, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    /// Bilinear sample at a pixel position; zero outside the frame.
    pub fn sample(&self, p: Vec2) -> f32 {
        let x = p.x - 0.5;
        let y = p.y - 0.5;
        if !(x > -1.0 && y > -1.0 && x < self.width as f64 && y < self.height as f64) {
            return 0.0;
        }
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
        let at = |c: f64, r: f64| -> f32 {
            if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
                0.0
            } else {
                self.data[r as usize * self.width + c as usize]
            }
        };
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
        let bot = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

/// What `cam` sees of the canvas: paint coverage in [0, 1] per pixel,
/// sampled at pixel centers.
pub fn render_view(cam: &CameraModel, wall: &WallFrame, canvas: &Canvas, threshold: f64) -> Option<Frame> {
    let to_wall = wall_to_image(cam, wall).inverse()?;
    let (w, h) = (cam.image_size.0 as usize, cam.image_size.1 as usize);
    let g = canvas.grid;
    let mut data = vec![0.0f32; w * h];
    for r in 0..h {
        for c in 0..w {
            let Some(q) = to_wall.apply(Vec2::new(c as f64 + 0.5, r as f64 + 0.5)) else { continue };
            let col = ((q.x - g.origin.x) / g.cell).floor();
            let row = ((q.y - g.origin.y) / g.cell).floor();
            if col >= 0.0 && row >= 0.0 && (col as usize) < g.width && (row as usize) < g.height {
                data[r * w + c] = (canvas.at(col as usize, row as usize) / threshold).min(1.0) as f32;
            }
        }
    }
    Some(Frame { width: w, height: h, data })
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ReprojectError {
    #[error("no camera calibration available")]
    Uncalibrated,
    #[error("camera sees the wall edge-on")]
    Degenerate,
}

/// Samples the frame at every grid cell center through the estimated
/// camera. Values are coverage in [0, 1].
pub fn reproject(frame: &Frame, cam: Option<&CameraModel>, wall: &WallFrame, grid: Grid) -> Result<Vec<f32>, ReprojectError> {
    let cam = cam.ok_or(ReprojectError::Uncalibrated)?;
    let h = wall_to_image(cam, wall);
    h.inverse().ok_or(ReprojectError::Degenerate)?;
    let mut out = vec![0.0f32; grid.len()];
    for row in 0..grid.height {
        for col in 0..grid.width {
            if let Some(px) = h.apply(grid.center(col, row)) {
                out[row * grid.width + col] = frame.sample(px);
            }
        }
    }
    Ok(out)
}

pub fn overlay_raster(grid: Grid, values: &[f32]) -> Raster {
    Raster { grid, cells: values.iter().map(|v| *v >= 0.5).collect() }
}

/// Weighted centroid of the marked cells, wall meters.
pub fn centroid(grid: &Grid, weights: impl Iterator<Item = f64>) -> Option<Vec2> {
    let mut sum = Vec2::new(0.0, 0.0);
    let mut total = 0.0;
    for (k, w) in weights.enumerate() {
        if w > 0.0 {
            sum = sum + grid.center(k % grid.width, k / grid.width) * w;
            total += w;
        }
    }
    (total > 0.0).then(|| sum * (1.0 / total))
}

/// Offset of the overlay's paint from the planned strokes.
pub fn overlay_offset(overlay: &Raster, target: &Raster) -> Option<Vec2> {
    let a = centroid(&overlay.grid, overlay.cells.iter().map(|c| f64::from(u8::from(*c))))?;
    let b = centroid(&target.grid, target.cells.iter().map(|c| f64::from(u8::from(*c))))?;
    Some(a - b)
}

/// Run-length code of a raster for the wire: alternating off/on counts
/// over the cells in storage order, starting with off.
pub fn encode_overlay(r: &Raster) -> Overlay {
    let mut runs = Vec::new();
    let mut cur = false;
    let mut n = 0u32;
    for c in &r.cells {
        if *c != cur {
            runs.push(n);
            cur = *c;
            n = 0;
        }
        n += 1;
    }
    runs.push(n);
    Overlay { origin: [r.grid.origin.x, r.grid.origin.y], cell_m: r.grid.cell, width: r.grid.width, height: r.grid.height, runs }
}

pub fn decode_overlay(o: &Overlay) -> Option<Raster> {
    let grid = Grid { origin: Vec2::new(o.origin[0], o.origin[1]), cell: o.cell_m, width: o.width, height: o.height };
    let mut cells = Vec::with_capacity(grid.len());
    for (k, n) in o.runs.iter().enumerate() {
        cells.extend(std::iter::repeat(k % 2 == 1).take(*n as usize));
    }
    (cells.len() == grid.len()).then_some(Raster { grid, cells })
}
