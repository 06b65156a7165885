//! Primary / backup radio link model.

use alloc::vec::Vec;

use crate::lidar::LinkSource;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// One-way latency of the primary link, s.
    pub primary_latency: f64,
    pub backup_latency: f64,
    /// `[start, end)` send-time windows during which the link loses
    /// everything.
    pub primary_drops: Vec<(f64, f64)>,
    pub backup_drops: Vec<(f64, f64)>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { primary_latency: 0.02, backup_latency: 0.05, primary_drops: Vec::new(), backup_drops: Vec::new() }
    }
}

fn down(windows: &[(f64, f64)], t: f64) -> bool {
    windows.iter().any(|(a, b)| t >= *a && t < *b)
}

impl LinkConfig {
    pub fn primary_up(&self, t: f64) -> bool {
        !down(&self.primary_drops, t)
    }

    pub fn backup_up(&self, t: f64) -> bool {
        !down(&self.backup_drops, t)
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.primary_latency >= 0.0) || !(self.backup_latency > self.primary_latency) {
            return Err("need 0 <= primary latency < backup latency");
        }
        if self.primary_drops.iter().chain(&self.backup_drops).any(|(a, b)| !(b > a)) {
            return Err("drop windows must have end > start");
        }
        Ok(())
    }
}

/// Arrival times of one message sent at `t`. Fix-class messages travel on
/// both links; everything else only on the primary. The consumer keeps the
/// first copy, which is the first element.
pub fn inject_link_model(cfg: &LinkConfig, t: f64, fix_class: bool) -> Vec<(f64, LinkSource)> {
    let mut out = Vec::with_capacity(2);
    if cfg.primary_up(t) {
        out.push((t + cfg.primary_latency, LinkSource::Primary));
    }
    if fix_class && cfg.backup_up(t) {
        out.push((t + cfg.backup_latency, LinkSource::Backup));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn primary_wins_when_up() {
        let cfg = LinkConfig::default();
        let d = inject_link_model(&cfg, 1.0, true);
        assert_eq!(d[0], (1.02, LinkSource::Primary));
        assert_eq!(d.len(), 2);
        assert_eq!(inject_link_model(&cfg, 1.0, false).len(), 1);
    }

    #[test]
    fn outage_falls_back_to_backup() {
        let cfg = LinkConfig { primary_drops: vec![(1.0, 3.0)], ..LinkConfig::default() };
        let d = inject_link_model(&cfg, 2.0, true);
        assert_eq!(d, vec![(2.05, LinkSource::Backup)]);
        assert!(inject_link_model(&cfg, 2.0, false).is_empty());
        assert_eq!(inject_link_model(&cfg, 3.0, true)[0].1, LinkSource::Primary);
    }

    #[test]
    fn both_down_delivers_nothing() {
        let cfg = LinkConfig { primary_drops: vec![(0.0, 1.0)], backup_drops: vec![(0.0, 1.0)], ..LinkConfig::default() };
        assert!(inject_link_model(&cfg, 0.5, true).is_empty());
    }
}
