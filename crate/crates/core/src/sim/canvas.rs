//! Paint raster, spray footprints and raster scoring.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;
use crate::math::Vec2;
use crate::sim::dynamics::Cap;

/// FWHM of a Gaussian in units of its sigma.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
/// Footprints are truncated at this many sigmas.
const TRUNCATE: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SprayModel {
    /// Thin-cap sigma per meter of wall distance.
    pub thin_sigma_per_m: f64,
    /// Vertical over horizontal sigma of the wide cap.
    pub wide_aspect: f64,
    /// Wide-cap horizontal sigma per meter of wall distance.
    pub wide_sigma_per_m: f64,
    pub thin_flow_gps: f64,
    pub wide_flow_gps: f64,
    /// Paint sprayed from farther away than this never reaches the wall.
    pub max_distance: f64,
}

impl Default for SprayModel {
    fn default() -> Self {
        // 2 cm full width at half maximum from 10 cm away
        let s = 0.02 / FWHM_PER_SIGMA / 0.10;
        SprayModel {
            thin_sigma_per_m: s,
            wide_aspect: 5.0,
            wide_sigma_per_m: s,
            thin_flow_gps: 1.0,
            wide_flow_gps: 3.0,
            max_distance: 0.5,
        }
    }
}

impl SprayModel {
    /// Footprint sigmas (horizontal, vertical) at wall distance `n`.
    pub fn sigma(&self, cap: Cap, n: f64) -> (f64, f64) {
        match cap {
            Cap::Thin => (self.thin_sigma_per_m * n, self.thin_sigma_per_m * n),
            Cap::Wide => {
                let s = self.wide_sigma_per_m * n;
                (s, s * self.wide_aspect)
            }
        }
    }

    pub fn flow(&self, cap: Cap) -> f64 {
        match cap {
            Cap::Thin => self.thin_flow_gps,
            Cap::Wide => self.wide_flow_gps,
        }
    }

    /// Cell mass at half the peak of a straight thin stroke drawn at speed
    /// `v` from distance `n`; cells at or above it count as painted.
    pub fn paint_threshold(&self, cell: f64, v: f64, n: f64) -> f64 {
        let sigma = self.thin_sigma_per_m * n;
        0.5 * self.thin_flow_gps / (v * (2.0 * core::f64::consts::PI).sqrt() * sigma) * cell * cell
    }
}

/// Cell layout shared by canvases and rasters. Row 0 is the lowest `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    /// Wall coordinates of the lower-left corner of cell (0, 0).
    pub origin: Vec2,
    pub cell: f64,
    pub width: usize,
    pub height: usize,
}

impl Grid {
    /// Grid covering `[min, max]` with square cells.
    pub fn covering(min: Vec2, max: Vec2, cell: f64) -> Grid {
        let width = ((max.x - min.x) / cell).ceil().max(1.0) as usize;
        let height = ((max.y - min.y) / cell).ceil().max(1.0) as usize;
        Grid { origin: min, cell, width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, col: usize, row: usize) -> Vec2 {
        self.origin + Vec2::new((col as f64 + 0.5) * self.cell, (row as f64 + 0.5) * self.cell)
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.cell, self.height as f64 * self.cell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub grid: Grid,
    /// Deposited grams per cell, row-major.
    pub mass: Vec<f64>,
}

impl Canvas {
    pub fn new(grid: Grid) -> Canvas {
        Canvas { grid, mass: vec![0.0; grid.len()] }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.mass[row * self.grid.width + col]
    }

    /// Deposits `mass` grams with a Gaussian footprint centered on `c`.
    /// Weights are normalized over the full truncated footprint, so mass
    /// falling outside the canvas is lost; the landed mass is returned.
    pub fn splat(&mut self, c: Vec2, sigma_u: f64, sigma_v: f64, mass: f64) -> f64 {
        let g = self.grid;
        let su = sigma_u.max(0.25 * g.cell);
        let sv = sigma_v.max(0.25 * g.cell);
        let axis = |center: f64, origin: f64, s: f64| {
            let lo = ((center - TRUNCATE * s - origin) / g.cell).floor() as i64;
            let hi = ((center + TRUNCATE * s - origin) / g.cell).floor() as i64;
            let w: Vec<f64> = (lo..=hi)
                .map(|k| {
                    let d = origin + (k as f64 + 0.5) * g.cell - center;
                    (-0.5 * d * d / (s * s)).exp()
                })
                .collect();
            (lo, w)
        };
        let (c0, wu) = axis(c.x, g.origin.x, su);
        let (r0, wv) = axis(c.y, g.origin.y, sv);
        let total = wu.iter().sum::<f64>() * wv.iter().sum::<f64>();
        if !(total > 0.0) {
            return 0.0;
        }
        let scale = mass / total;
        let mut landed = 0.0;
        for (j, wy) in wv.iter().enumerate() {
            let row = r0 + j as i64;
            if row < 0 || row >= g.height as i64 {
                continue;
            }
            for (i, wx) in wu.iter().enumerate() {
                let col = c0 + i as i64;
                if col < 0 || col >= g.width as i64 {
                    continue;
                }
                let m = scale * wx * wy;
                self.mass[row as usize * g.width + col as usize] += m;
                landed += m;
            }
        }
        landed
    }

    /// Sprays `mass` grams spread evenly along the nozzle track `a -> b` at
    /// wall distance `n`. Returns the landed mass.
    pub fn deposit_segment(&mut self, a: Vec2, b: Vec2, n: f64, mass: f64, cap: Cap, model: &SprayModel) -> f64 {
        if mass <= 0.0 || !(n <= model.max_distance) {
            return 0.0;
        }
        let (su, sv) = model.sigma(cap, n.max(0.0));
        let step = 0.5 * su.min(sv).max(0.25 * self.grid.cell);
        let k = ((a.dist(b) / step).ceil() as usize).max(1);
        let m = mass / k as f64;
        (0..k).map(|i| self.splat(a.lerp(b, (i as f64 + 0.5) / k as f64), su, sv, m)).sum()
    }

    pub fn threshold(&self, t: f64) -> Raster {
        Raster { grid: self.grid, cells: self.mass.iter().map(|m| *m >= t).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: Grid,
    pub cells: Vec<bool>,
}

impl Raster {
    pub fn empty(grid: Grid) -> Raster {
        Raster { grid, cells: vec![false; grid.len()] }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.grid.width + col]
    }

    /// Marks every cell whose center lies within `half_width` of the
    /// polyline.
    pub fn stamp_polyline(&mut self, pts: &[Vec2], half_width: f64) {
        let g = self.grid;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let lo = Vec2::new(a.x.min(b.x) - half_width, a.y.min(b.y) - half_width);
            let hi = Vec2::new(a.x.max(b.x) + half_width, a.y.max(b.y) + half_width);
            let c0 = ((lo.x - g.origin.x) / g.cell).floor().max(0.0) as usize;
            let r0 = ((lo.y - g.origin.y) / g.cell).floor().max(0.0) as usize;
            let c1 = (((hi.x - g.origin.x) / g.cell).floor().max(-1.0) as i64 + 1).min(g.width as i64).max(0) as usize;
            let r1 = (((hi.y - g.origin.y) / g.cell).floor().max(-1.0) as i64 + 1).min(g.height as i64).max(0) as usize;
            let ab = b - a;
            let len2 = ab.norm_sq();
            for row in r0..r1 {
                for col in c0..c1 {
                    let p = g.center(col, row);
                    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    if p.dist(a + ab * t) <= half_width {
                        self.cells[row * g.width + col] = true;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub iou: f64,
    /// Share of the target that is painted.
    pub coverage: f64,
    /// Share of the paint that lies outside the target.
    pub overspray: f64,
}

/// Compares two rasters cell by cell. Both must share a grid shape.
pub fn score(painted: &Raster, target: &Raster) -> Score {
    assert_eq!(painted.cells.len(), target.cells.len(), "raster shapes differ");
    let (mut inter, mut p, mut t) = (0usize, 0usize, 0usize);
    for (a, b) in painted.cells.iter().zip(&target.cells) {
        inter += usize::from(*a && *b);
        p += usize::from(*a);
        t += usize::from(*b);
    }
    let union = p + t - inter;
    let ratio = |n: usize, d: usize, empty: f64| if d == 0 { empty } else { n as f64 / d as f64 };
    Score { iou: ratio(inter, union, 1.0), coverage: ratio(inter, t, 1.0), overspray: ratio(p - inter, p, 0.0) }
}

/// Width of a sampled profile at half its maximum, interpolating linearly
/// between samples spaced `step` apart.
pub fn half_max_width(profile: &[f64], step: f64) -> f64 {
    let Some((imax, &peak)) = profile.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) else { return 0.0 };
    if peak <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * peak;
    let cross = |i_in: usize, i_out: usize| {
        let (a, b) = (profile[i_in], profile[i_out]);
        let f = (a - half) / (a - b);
        i_in as f64 + f * (i_out as f64 - i_in as f64)
    };
    let mut l = imax;
    while l > 0 && profile[l - 1] >= half {
        l -= 1;
    }
    let left = if l == 0 { 0.0 } else { cross(l, l - 1) };
    let mut r = imax;
    while r + 1 < profile.len() && profile[r + 1] >= half {
        r += 1;
    }
    let right = if r + 1 == profile.len() { r as f64 } else { cross(r, r + 1) };
    (right - left) * step
}
