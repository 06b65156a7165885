//! Mean wind plus band-limited seeded gusts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
use crate::math::Float;
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindConfig {
    pub mean: Vec3,
    /// Peak gust speed per axis, m/s.
    pub gust_amplitude: f64,
    pub gust_min_hz: f64,
    pub gust_max_hz: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        WindConfig { mean: Vec3::ZERO, gust_amplitude: 0.0, gust_min_hz: 0.2, gust_max_hz: 1.0 }
    }
}

const TONES: usize = 3;

/// Each axis carries three sinusoids with random frequencies in the gust
/// band; their amplitudes sum to the gust amplitude, so the peak per axis
/// never exceeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct Wind {
    mean: Vec3,
    tones: [[(f64, f64, f64); TONES]; 3],
}

impl Wind {
    pub fn new(cfg: &WindConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tones = [[(0.0, 0.0, 0.0); TONES]; 3];
        for axis in tones.iter_mut() {
            let w: [f64; TONES] = core::array::from_fn(|_| rng.random_range(0.5..1.0));
            let total: f64 = w.iter().sum();
            for (k, tone) in axis.iter_mut().enumerate() {
                let f = rng.random_range(cfg.gust_min_hz..=cfg.gust_max_hz);
                let phase = rng.random_range(0.0..core::f64::consts::TAU);
                *tone = (cfg.gust_amplitude * w[k] / total, core::f64::consts::TAU * f, phase);
            }
        }
        Wind { mean: cfg.mean, tones }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        let g = |axis: &[(f64, f64, f64); TONES]| axis.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum::<f64>();
        self.mean + Vec3::new(g(&self.tones[0]), g(&self.tones[1]), g(&self.tones[2]))
    }
}
