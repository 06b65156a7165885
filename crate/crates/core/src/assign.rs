//! Splitting a mission plan into per-drone slices.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::compiler::MissionPlan;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssignError {
    #[error("paths assigned to more than one drone: {0:?}")]
    Overlap(Vec<u32>),
    #[error("paths not in the plan: {0:?}")]
    Unknown(Vec<u32>),
}

/// Builds one plan slice per selection. Each slice keeps the global plan
/// order, so band monotonicity of the plan carries over to every slice.
pub fn assign_paths<K: Clone>(plan: &MissionPlan, selections: &[(K, Vec<u32>)]) -> Result<Vec<(K, MissionPlan)>, AssignError> {
    let mut owner: BTreeMap<u32, usize> = BTreeMap::new();
    let mut overlap = Vec::new();
    let mut unknown = Vec::new();
    for (k, (_, ids)) in selections.iter().enumerate() {
        for id in ids {
            if plan.path(*id).is_none() {
                unknown.push(*id);
                continue;
            }
            match owner.insert(*id, k) {
                Some(prev) if prev != k => overlap.push(*id),
                Some(_) => {}
                None => {}
            }
        }
    }
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(AssignError::Unknown(unknown));
    }
    if !overlap.is_empty() {
        overlap.sort_unstable();
        overlap.dedup();
        return Err(AssignError::Overlap(overlap));
    }
    Ok(selections
        .iter()
        .enumerate()
        .map(|(k, (key, _))| {
            let paths = plan.paths.iter().filter(|p| owner.get(&p.id) == Some(&k)).cloned().collect();
            (key.clone(), MissionPlan { paths, wall_extent: plan.wall_extent, params: plan.params })
        })
        .collect())
}

/// Default split for `drones` drones: vertical strips of equal width, each
/// path going to the strip holding the midpoint of its drawing portion.
pub fn strip_selection(plan: &MissionPlan, drones: usize) -> Vec<Vec<u32>> {
    let mut out = alloc::vec![Vec::new(); drones.max(1)];
    let w = plan.wall_extent.0.max(1e-9);
    for p in &plan.paths {
        let pts = p.drawing_points();
        let mid = if pts.is_empty() {
            p.start().x
        } else {
            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q.x), b.max(q.x)));
            0.5 * (lo + hi)
        };
        let k = ((mid / w * out.len() as f64) as isize).clamp(0, out.len() as isize - 1) as usize;
        out[k].push(p.id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileParams};
    use alloc::vec;

    fn plan() -> MissionPlan {
        let svg = r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 200 200">
            <rect x="10" y="10" width="60" height="40"/>
            <rect x="120" y="100" width="50" height="60"/>
            <path d="M 20 180 L 180 180" fill="none" stroke="black"/>
            <path d="M 20 120 L 90 150" fill="none" stroke="black"/>
        </svg>"#;
        compile(svg, &CompileParams::default()).unwrap()
    }

    #[test]
    fn everything_to_one_drone_is_identity() {
        let p = plan();
        let out = assign_paths(&p, &[("d1", p.ids())]).unwrap();
        assert_eq!(out[0].1, p);
    }

    #[test]
    fn even_odd_split_keeps_band_order() {
        let p = plan();
        assert!(p.is_band_monotone());
        let even: Vec<u32> = p.ids().into_iter().filter(|i| i % 2 == 0).collect();
        let odd: Vec<u32> = p.ids().into_iter().filter(|i| i % 2 == 1).collect();
        let out = assign_paths(&p, &[(1, even.clone()), (2, odd.clone())]).unwrap();
        assert!(out.iter().all(|(_, s)| s.is_band_monotone()));
        assert_eq!(out[0].1.paths.len() + out[1].1.paths.len(), p.paths.len());
    }

    #[test]
    fn overlap_names_the_ids() {
        let p = plan();
        let id = p.ids()[1];
        let err = assign_paths(&p, &[("a", vec![id]), ("b", vec![id])]).unwrap_err();
        assert_eq!(err, AssignError::Overlap(vec![id]));
        assert!(assign_paths(&p, &[("a", vec![999])]).is_err());
    }

    #[test]
    fn strips_cover_every_path_once() {
        let p = plan();
        let s = strip_selection(&p, 2);
        let mut all: Vec<u32> = s.concat();
        all.sort_unstable();
        let mut ids = p.ids();
        ids.sort_unstable();
        assert_eq!(all, ids);
        assert!(!s[0].is_empty() && !s[1].is_empty());
    }
}
