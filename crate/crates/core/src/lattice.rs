//! Bottom-up lattice search over hyper-rectangles.
//!
//! Rectangles satisfying a mass criterion are grown level by level in
//! Apriori fashion (join on a shared side prefix, prune on missing
//! projections); those that also satisfy the purity criterion are reported.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::density::Interval;
use crate::error::{Error, Result};

/// An axis-aligned box over a subset of features. Sides are kept in strictly
/// increasing feature order, which makes side lists directly comparable.
#[derive(Clone, Debug, Serialize)]
pub struct HyperRectangle {
    sides: Vec<(usize, Interval)>,
    mass: usize,
    impurity: usize,
}

impl HyperRectangle {
    /// Builds a rectangle with unset (zero) counts; call
    /// [`recount`](Self::recount) to fill them in.
    pub fn new(sides: Vec<(usize, Interval)>) -> Self {
        debug_assert!(
            sides.windows(2).all(|w| w[0].0 < w[1].0),
            "sides must be in strictly increasing feature order"
        );
        Self {
            sides,
            mass: 0,
            impurity: 0,
        }
    }

    pub fn sides(&self) -> &[(usize, Interval)] {
        &self.sides
    }

    /// Number of sides (the rectangle's subspace dimensionality).
    pub fn level(&self) -> usize {
        self.sides.len()
    }

    /// Count of enclosed anomalies.
    pub fn mass(&self) -> usize {
        self.mass
    }

    /// Count of enclosed normal points.
    pub fn impurity(&self) -> usize {
        self.impurity
    }

    /// Containment test with inclusive bounds on both ends.
    pub fn contains(&self, point: ndarray::ArrayView1<'_, f64>) -> bool {
        self.sides
            .iter()
            .all(|&(feature, iv)| iv.contains(point[feature]))
    }

    /// Recomputes cached mass/impurity against the dataset.
    pub fn recount(&mut self, dataset: &LabeledDataset) {
        let c = mass_and_impurity(&self.sides, dataset);
        self.mass = c.mass;
        self.impurity = c.impurity;
    }

    fn key(&self) -> Vec<(usize, u64, u64)> {
        self.sides
            .iter()
            .map(|&(f, iv)| (f, iv.lb.to_bits(), iv.ub.to_bits()))
            .collect()
    }
}

/// Exact containment counts plus the enclosed point IDs.
#[derive(Clone, Debug)]
pub struct Containment {
    pub mass: usize,
    pub impurity: usize,
    pub anomaly_ids: Vec<usize>,
    pub normal_ids: Vec<usize>,
}

/// Scans every point of the dataset against the given sides.
pub fn mass_and_impurity(sides: &[(usize, Interval)], dataset: &LabeledDataset) -> Containment {
    let mut anomaly_ids = Vec::new();
    let mut normal_ids = Vec::new();
    'point: for id in 0..dataset.num_points() {
        let row = dataset.point(id);
        for &(feature, iv) in sides {
            if !iv.contains(row[feature]) {
                continue 'point;
            }
        }
        if dataset.is_anomaly(id) {
            anomaly_ids.push(id);
        } else {
            normal_ids.push(id);
        }
    }
    Containment {
        mass: anomaly_ids.len(),
        impurity: normal_ids.len(),
        anomaly_ids,
        normal_ids,
    }
}

/// Joins rectangles at level `k` into level `k+1` candidates and prunes any
/// candidate with a `k`-dimensional projection missing from the input. The
/// join requires the first `k-1` sides to match exactly and the last feature
/// indices to be ordered. Counts of the output are left unset (computed
/// lazily by the level pass).
pub fn generate_candidates(level: &[HyperRectangle]) -> Result<Vec<HyperRectangle>> {
    if level.is_empty() {
        return Ok(Vec::new());
    }
    let k = level[0].level();
    if level.iter().any(|r| r.level() != k) {
        return Err(Error::input("mixed rectangle levels in candidate generation"));
    }
    let known: std::collections::HashSet<Vec<(usize, u64, u64)>> =
        level.iter().map(|r| r.key()).collect();

    let mut out: Vec<HyperRectangle> = Vec::new();
    let mut emitted: std::collections::HashSet<Vec<(usize, u64, u64)>> =
        std::collections::HashSet::new();
    for (i, left) in level.iter().enumerate() {
        for right in &level[i + 1..] {
            let (lk, rk) = (left.key(), right.key());
            if lk[..k - 1] != rk[..k - 1] {
                continue;
            }
            // Orient so the appended feature index strictly increases.
            let (base, extra) = if lk[k - 1].0 < rk[k - 1].0 {
                (left, right)
            } else if rk[k - 1].0 < lk[k - 1].0 {
                (right, left)
            } else {
                continue; // same last feature, different interval: no join
            };
            let mut sides = base.sides.clone();
            sides.push(extra.sides[k - 1]);
            let candidate = HyperRectangle::new(sides);
            let ckey = candidate.key();
            if emitted.contains(&ckey) {
                continue;
            }
            // Prune: every k-dimensional projection must be a known rectangle.
            let prunable = (0..=k).any(|drop| {
                let proj: Vec<_> = ckey
                    .iter()
                    .enumerate()
                    .filter(|(z, _)| *z != drop)
                    .map(|(_, s)| *s)
                    .collect();
                !known.contains(&proj)
            });
            if prunable {
                continue;
            }
            emitted.insert(ckey);
            out.push(candidate);
        }
    }
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct SubclusParams {
    /// Minimum number of enclosed anomalies.
    pub mass_threshold: usize,
    /// Maximum number of enclosed normal points for a rectangle to be reported.
    pub purity_threshold: usize,
    /// Highest lattice level to expand; hitting the cap is reported.
    pub level_cap: usize,
}

impl Default for SubclusParams {
    fn default() -> Self {
        Self {
            mass_threshold: 2,
            purity_threshold: 0,
            level_cap: 6,
        }
    }
}

/// Rectangles that met the mass criterion at one level.
#[derive(Clone, Debug, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub candidates: usize,
    pub mass_survivors: Vec<HyperRectangle>,
    pub reported: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SubclusOutcome {
    /// Every rectangle, at any level, with mass >= ms and impurity <= mu.
    pub rectangles: Vec<HyperRectangle>,
    pub levels: Vec<LevelStats>,
    pub level_cap_hit: bool,
}

/// Level-by-level search. Rectangles that meet the mass criterion continue
/// to candidate generation whether or not they are pure; purity only gates
/// what is reported.
pub fn subclus(
    dataset: &LabeledDataset,
    seeds: &[HyperRectangle],
    params: &SubclusParams,
) -> SubclusOutcome {
    let mut outcome = SubclusOutcome::default();
    if seeds.is_empty() {
        return outcome;
    }
    let ms = params.mass_threshold;
    let mu = params.purity_threshold;

    let mut current: Vec<HyperRectangle> = {
        let mut seen = std::collections::HashSet::new();
        seeds
            .iter()
            .filter(|r| seen.insert(r.key()))
            .cloned()
            .collect()
    };
    let mut level = 1usize;
    loop {
        let candidates = current.len();
        let survivors: Vec<HyperRectangle> =
            current.into_iter().filter(|r| r.mass >= ms).collect();
        let pure: Vec<HyperRectangle> = survivors
            .iter()
            .filter(|r| r.impurity <= mu)
            .cloned()
            .collect();
        outcome.levels.push(LevelStats {
            level,
            candidates,
            mass_survivors: survivors.clone(),
            reported: pure.len(),
        });
        outcome.rectangles.extend(pure);

        if survivors.is_empty() {
            break;
        }
        let mut next = match generate_candidates(&survivors) {
            Ok(next) => next,
            Err(_) => unreachable!("levels are uniform by construction"),
        };
        if next.is_empty() {
            break;
        }
        if level >= params.level_cap {
            outcome.level_cap_hit = true;
            log::warn!(
                "lattice level cap {} reached with {} pending candidates",
                params.level_cap,
                next.len()
            );
            break;
        }
        next.par_iter_mut().for_each(|r| r.recount(dataset));
        current = next;
        level += 1;
    }
    outcome
}

/// Median-based thresholds from the level-1 seeds: the lower median of the
/// seed masses (floored at 2, since a single anomaly cannot be compressed)
/// and the lower median of the seed impurities.
pub fn default_thresholds(seeds: &[HyperRectangle]) -> Result<(usize, usize)> {
    if seeds.is_empty() {
        return Err(Error::input("cannot derive thresholds from an empty seed set"));
    }
    let lower_median = |mut v: Vec<usize>| -> usize {
        v.sort_unstable();
        v[(v.len() - 1) / 2]
    };
    let ms = lower_median(seeds.iter().map(|r| r.mass).collect()).max(2);
    let mu = lower_median(seeds.iter().map(|r| r.impurity).collect());
    Ok((ms, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn iv(lb: f64, ub: f64) -> Interval {
        Interval::new(lb, ub)
    }

    fn rect(sides: Vec<(usize, Interval)>, mass: usize, impurity: usize) -> HyperRectangle {
        let mut r = HyperRectangle::new(sides);
        r.mass = mass;
        r.impurity = impurity;
        r
    }

    /// Six hand-placed points in 2-d; first three anomalous.
    fn fixture() -> LabeledDataset {
        let points = Array2::from_shape_vec(
            (6, 2),
            vec![
                0.25, 0.10, // anomaly, inside f0:[0.2,0.4]
                0.30, 0.90, // anomaly, inside f0:[0.2,0.4]
                0.90, 0.50, // anomaly, outside
                0.35, 0.20, // normal, inside
                0.50, 0.60, // normal, outside
                0.20, 0.80, // normal, inside (bounds inclusive)
            ],
        )
        .unwrap();
        LabeledDataset::from_parts(
            points,
            vec![true, true, true, false, false, false],
            vec!["f0".into(), "f1".into()],
        )
        .unwrap()
    }

    #[test]
    fn containment_hand_enumeration() {
        let ds = fixture();
        let c = mass_and_impurity(&[(0, iv(0.2, 0.4))], &ds);
        assert_eq!(c.mass, 2);
        assert_eq!(c.impurity, 2);
        assert_eq!(c.anomaly_ids, vec![0, 1]);
        assert_eq!(c.normal_ids, vec![3, 5]);
    }

    #[test]
    fn containment_full_cover_and_empty() {
        let ds = fixture();
        let full = mass_and_impurity(&[(0, iv(0.0, 1.0))], &ds);
        assert_eq!(full.mass, ds.num_anomalies());
        assert_eq!(full.impurity, ds.num_normals());
        let empty = mass_and_impurity(&[(1, iv(0.55, 0.55))], &ds);
        assert_eq!((empty.mass, empty.impurity), (0, 0));
    }

    #[test]
    fn join_level_one() {
        let level = vec![
            rect(vec![(1, iv(0.0, 0.5))], 3, 0),
            rect(vec![(2, iv(0.5, 1.0))], 3, 0),
        ];
        let next = generate_candidates(&level).unwrap();
        assert_eq!(next.len(), 1);
        assert_eq!(
            next[0].sides(),
            &[(1, iv(0.0, 0.5)), (2, iv(0.5, 1.0))]
        );
    }

    #[test]
    fn prune_requires_all_projections() {
        let a = iv(0.0, 0.4);
        let b = iv(0.2, 0.6);
        let c = iv(0.5, 1.0);
        // {f1,f2} and {f1,f3} join to {f1,f2,f3} only if {f2,f3} is present.
        let without = vec![
            rect(vec![(1, a), (2, b)], 3, 0),
            rect(vec![(1, a), (3, c)], 3, 0),
        ];
        assert!(generate_candidates(&without).unwrap().is_empty());
        let with = vec![
            rect(vec![(1, a), (2, b)], 3, 0),
            rect(vec![(1, a), (3, c)], 3, 0),
            rect(vec![(2, b), (3, c)], 3, 0),
        ];
        let next = generate_candidates(&with).unwrap();
        assert_eq!(next.len(), 1);
        assert_eq!(next[0].sides(), &[(1, a), (2, b), (3, c)]);
    }

    #[test]
    fn no_join_on_prefix_mismatch() {
        let level = vec![
            rect(vec![(1, iv(0.0, 0.4)), (2, iv(0.2, 0.6))], 3, 0),
            rect(vec![(1, iv(0.1, 0.4)), (3, iv(0.5, 1.0))], 3, 0),
        ];
        assert!(generate_candidates(&level).unwrap().is_empty());
    }

    #[test]
    fn no_join_same_feature_different_interval() {
        let level = vec![
            rect(vec![(1, iv(0.0, 0.4))], 3, 0),
            rect(vec![(1, iv(0.5, 0.9))], 3, 0),
        ];
        assert!(generate_candidates(&level).unwrap().is_empty());
    }

    #[test]
    fn mixed_levels_rejected() {
        let level = vec![
            rect(vec![(1, iv(0.0, 0.4))], 3, 0),
            rect(vec![(1, iv(0.0, 0.4)), (2, iv(0.0, 1.0))], 3, 0),
        ];
        assert!(generate_candidates(&level).is_err());
    }

    #[test]
    fn candidates_never_duplicate() {
        let a = iv(0.0, 0.4);
        let b = iv(0.2, 0.6);
        let level = vec![
            rect(vec![(1, a)], 3, 0),
            rect(vec![(2, b)], 3, 0),
            rect(vec![(1, a)], 3, 0), // duplicate seed slips through
        ];
        let next = generate_candidates(&level).unwrap();
        assert_eq!(next.len(), 1);
    }

    fn planted_2d() -> (LabeledDataset, Vec<HyperRectangle>) {
        // 8 anomalies inside [0.2,0.4]x[0.6,0.8]; normals elsewhere.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            rows.extend_from_slice(&[0.2 + 0.025 * i as f64, 0.6 + 0.025 * i as f64]);
            labels.push(true);
        }
        for i in 0..12 {
            let t = i as f64 / 11.0;
            rows.extend_from_slice(&[0.5 + 0.4 * t, 0.1 + 0.3 * t]);
            labels.push(false);
        }
        let points = Array2::from_shape_vec((20, 2), rows).unwrap();
        let ds = LabeledDataset::from_parts(
            points,
            labels,
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        let mut seeds = vec![
            HyperRectangle::new(vec![(0, iv(0.2, 0.4))]),
            HyperRectangle::new(vec![(1, iv(0.6, 0.8))]),
        ];
        for s in &mut seeds {
            s.recount(&ds);
        }
        (ds, seeds)
    }

    #[test]
    fn subclus_finds_planted_join() {
        let (ds, seeds) = planted_2d();
        let out = subclus(
            &ds,
            &seeds,
            &SubclusParams {
                mass_threshold: 2,
                purity_threshold: 0,
                level_cap: 6,
            },
        );
        let two_d: Vec<_> = out.rectangles.iter().filter(|r| r.level() == 2).collect();
        assert_eq!(two_d.len(), 1);
        assert_eq!(two_d[0].mass(), 8);
        assert_eq!(two_d[0].impurity(), 0);
    }

    #[test]
    fn subclus_terminates_empty_when_mass_unreachable() {
        let (ds, seeds) = planted_2d();
        let out = subclus(
            &ds,
            &seeds,
            &SubclusParams {
                mass_threshold: 100,
                purity_threshold: 0,
                level_cap: 6,
            },
        );
        assert!(out.rectangles.is_empty());
        assert_eq!(out.levels.len(), 1);
    }

    #[test]
    fn subclus_downward_closure_on_output() {
        let (ds, seeds) = planted_2d();
        let out = subclus(
            &ds,
            &seeds,
            &SubclusParams {
                mass_threshold: 2,
                purity_threshold: 5,
                level_cap: 6,
            },
        );
        for r in &out.rectangles {
            for drop in 0..r.level() {
                if r.level() == 1 {
                    continue;
                }
                let proj: Vec<_> = r
                    .sides()
                    .iter()
                    .enumerate()
                    .filter(|(z, _)| *z != drop)
                    .map(|(_, s)| *s)
                    .collect();
                let c = mass_and_impurity(&proj, &ds);
                assert!(c.mass >= r.mass());
                // Upward closure of purity: the superset is at least as pure.
                assert!(r.impurity() <= c.impurity);
            }
        }
    }

    #[test]
    fn thresholds_odd_and_even_medians() {
        let seeds = vec![
            rect(vec![(0, iv(0.0, 1.0))], 3, 0),
            rect(vec![(1, iv(0.0, 1.0))], 5, 2),
            rect(vec![(2, iv(0.0, 1.0))], 9, 10),
        ];
        assert_eq!(default_thresholds(&seeds).unwrap(), (5, 2));
        let even = vec![
            rect(vec![(0, iv(0.0, 1.0))], 4, 1),
            rect(vec![(1, iv(0.0, 1.0))], 8, 3),
        ];
        assert_eq!(default_thresholds(&even).unwrap(), (4, 1));
    }

    #[test]
    fn thresholds_singleton_and_floor() {
        let single = vec![rect(vec![(0, iv(0.0, 1.0))], 7, 0)];
        assert_eq!(default_thresholds(&single).unwrap(), (7, 0));
        let tiny = vec![rect(vec![(0, iv(0.0, 1.0))], 1, 0)];
        assert_eq!(default_thresholds(&tiny).unwrap(), (2, 0));
        assert!(default_thresholds(&[]).is_err());
    }
}
