//! The encoding scheme: bit costs for packs, packings, exceptions, and
//! outliers, plus the reduction objective maximized by pack selection.
//!
//! Costs are real-valued bit counts; no bitstream is ever materialized.
//! Sending a packing costs the universal code of the pack count plus, per
//! pack, its subspace (count + identity), its center and diagonal shape at
//! the working precision, and the identity of enclosed normal points as a
//! subset of the pack's contents. Anomalies no pack covers are paid for at
//! the naive per-point rate.

use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::refine::Pack;

/// Constants of the encoding scheme.
#[derive(Clone, Debug)]
pub struct EncodingParams {
    pub ambient_dim: usize,
    pub dataset_size: usize,
    pub anomaly_count: usize,
    /// Bits per transmitted coordinate.
    pub log2_f: f64,
    /// Price the shape as a full matrix instead of a diagonal; kept for
    /// parity experiments only.
    pub full_shape_cost: bool,
    /// `log*(|E|) + sum of pack costs` over the full candidate pool; fixed
    /// once the pool exists and added so the reduction objective stays
    /// non-negative.
    pub candidate_pool_cost: f64,
}

impl EncodingParams {
    pub fn new(ambient_dim: usize, dataset_size: usize, anomaly_count: usize, log2_f: f64) -> Self {
        assert!(log2_f > 0.0, "log2_f must be positive");
        Self {
            ambient_dim,
            dataset_size,
            anomaly_count,
            log2_f,
            full_shape_cost: false,
            candidate_pool_cost: 0.0,
        }
    }

    pub fn with_full_shape_cost(mut self, on: bool) -> Self {
        self.full_shape_cost = on;
        self
    }

    /// Fixes the constant pool term from the candidate set.
    pub fn with_pool(mut self, pool: &[Pack]) -> Self {
        self.candidate_pool_cost = log_star(pool.len() as u64)
            + pool.iter().map(|p| pack_cost(p, &self)).sum::<f64>();
        self
    }

    /// Bits to transmit one anomaly individually.
    pub fn unit_cost(&self) -> f64 {
        self.ambient_dim as f64 * self.log2_f
    }
}

/// Universal integer code length: the sum of the positive terms of
/// `log2(k) + log2(log2(k)) + ...`, with the constant dropped. Zero and one
/// cost nothing.
pub fn log_star(k: u64) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut term = (k as f64).log2();
    while term > 0.0 {
        total += term;
        term = term.log2();
    }
    total
}

/// `log2 C(n, k)` through log-gamma, exact boundary cases returned directly.
pub fn log2_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "binomial with k > n");
    if k == 0 || k == n {
        return 0.0;
    }
    (ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
        / std::f64::consts::LN_2
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 relative.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Bits to transmit one pack: subspace size and identity, center and
/// diagonal shape at the working precision, and the exception set (count
/// plus identity of the normal points among the pack's contents).
pub fn pack_cost(pack: &Pack, params: &EncodingParams) -> f64 {
    let d = params.ambient_dim as u64;
    let dk = pack.subspace_dim() as u64;
    let nk = pack.impurity() as u64;
    let mk = (pack.mass() + pack.impurity()) as u64;
    assert!(dk <= d, "pack subspace larger than the ambient space");
    let shape_coords = if params.full_shape_cost {
        dk * (dk + 1)
    } else {
        2 * dk
    };
    log_star(dk)
        + log2_binomial(d, dk)
        + shape_coords as f64 * params.log2_f
        + log_star(nk)
        + log2_binomial(mk, nk)
}

/// Bits to transmit a whole packing: pack count plus per-pack costs.
pub fn packing_cost(packing: &[Pack], params: &EncodingParams) -> f64 {
    log_star(packing.len() as u64) + packing.iter().map(|p| pack_cost(p, params)).sum::<f64>()
}

/// Cost breakdown for describing the anomaly set with a given packing.
#[derive(Clone, Debug, Serialize)]
pub struct PackingCostReport {
    pub pack_count: usize,
    pub per_pack_bits: Vec<f64>,
    /// Anomalies no pack covers, encoded individually.
    pub outlier_ids: Vec<usize>,
    pub total_bits: f64,
    pub naive_bits: f64,
    pub savings_percent: f64,
}

/// Sorted union of the anomaly IDs covered by the packs.
pub fn union_coverage(packing: &[Pack]) -> Vec<usize> {
    let mut ids: Vec<usize> = packing
        .iter()
        .flat_map(|p| p.covered_anomalies.iter().cloned())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Total description length of the anomalies given a packing: uncovered
/// anomalies at the naive rate plus the packing transmission cost.
pub fn description_length(
    packing: &[Pack],
    dataset: &LabeledDataset,
    params: &EncodingParams,
) -> PackingCostReport {
    let covered = union_coverage(packing);
    let covered_set: std::collections::HashSet<usize> = covered.iter().cloned().collect();
    let outlier_ids: Vec<usize> = dataset
        .anomaly_ids()
        .iter()
        .filter(|id| !covered_set.contains(id))
        .cloned()
        .collect();
    let per_pack_bits: Vec<f64> = packing.iter().map(|p| pack_cost(p, params)).collect();
    let model_bits = log_star(packing.len() as u64) + per_pack_bits.iter().sum::<f64>();
    let total_bits = outlier_ids.len() as f64 * params.unit_cost() + model_bits;
    let naive_bits = params.anomaly_count as f64 * params.unit_cost();
    PackingCostReport {
        pack_count: packing.len(),
        per_pack_bits,
        outlier_ids,
        total_bits,
        naive_bits,
        savings_percent: 100.0 * (1.0 - total_bits / naive_bits),
    }
}

fn check_subset(subset: &[usize], pool_len: usize) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for &i in subset {
        if i >= pool_len {
            return Err(Error::input(format!(
                "subset index {i} outside candidate pool of size {pool_len}"
            )));
        }
        if !seen.insert(i) {
            return Err(Error::input(format!("duplicate subset index {i}")));
        }
    }
    Ok(())
}

/// The reduction in encoding cost achieved by a subset of the pool:
/// coverage value minus the subset's own transmission cost, shifted by the
/// constant pool term so the result is never negative.
pub fn reduction_objective(subset: &[usize], pool: &[Pack], params: &EncodingParams) -> Result<f64> {
    Ok(reduction_objective_fixed_k(subset, pool, params)? - log_star(subset.len() as u64))
}

/// The cardinality-fixed variant used inside the greedy loop: identical to
/// [`reduction_objective`] minus the `log*` size term.
pub fn reduction_objective_fixed_k(
    subset: &[usize],
    pool: &[Pack],
    params: &EncodingParams,
) -> Result<f64> {
    check_subset(subset, pool.len())?;
    let mut covered = std::collections::HashSet::new();
    let mut pack_bits = 0.0;
    for &i in subset {
        covered.extend(pool[i].covered_anomalies.iter().cloned());
        pack_bits += pack_cost(&pool[i], params);
    }
    Ok(covered.len() as f64 * params.unit_cost() - pack_bits + params.candidate_pool_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::{BoundaryParams, Provenance};
    use approx::assert_relative_eq;
    use ndarray::Array2;

    pub(crate) fn synthetic_pack(
        subspace_dim: usize,
        ambient: usize,
        anomalies: Vec<usize>,
        normals: Vec<usize>,
    ) -> Pack {
        assert!(subspace_dim <= ambient);
        Pack {
            params: BoundaryParams {
                subspace: (0..subspace_dim).collect(),
                quad: vec![-1.0; subspace_dim],
                linear: vec![0.0; subspace_dim],
                offset: 1.0,
            },
            center: vec![0.0; subspace_dim],
            inv_shape: vec![1.0; subspace_dim],
            radii: vec![1.0; subspace_dim],
            covered_anomalies: anomalies,
            enclosed_normals: normals,
            provenance: Provenance {
                rectangle: 0,
                alpha: 1.0,
                lambda: 1.0,
            },
        }
    }

    #[test]
    fn log_star_reference_values() {
        assert_eq!(log_star(0), 0.0);
        assert_eq!(log_star(1), 0.0);
        assert_eq!(log_star(2), 1.0);
        assert_relative_eq!(log_star(8), 5.2494, epsilon = 1e-3);
    }

    #[test]
    fn log_star_non_decreasing() {
        let mut prev = 0.0;
        for k in 1..2000u64 {
            let v = log_star(k);
            assert!(v >= prev, "log_star({k}) = {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn binomial_matches_exact_for_small_n() {
        for n in 0..=60u64 {
            let mut exact: u128 = 1;
            for k in 0..=n {
                if k > 0 {
                    exact = exact * (n - k + 1) as u128 / k as u128;
                }
                let approx_bits = log2_binomial(n, k);
                let exact_bits = (exact as f64).log2();
                assert!(
                    (approx_bits - exact_bits).abs() <= 1e-9 * (1.0 + exact_bits.abs()),
                    "C({n},{k}): {approx_bits} vs {exact_bits}"
                );
            }
        }
    }

    #[test]
    fn pack_cost_digit_shaped() {
        // d=16, d_k=2, log2_f=10, no exceptions, 228 points enclosed:
        // log*(2) + log2 C(16,2) + 40 = 1 + 6.9069 + 40.
        let params = EncodingParams::new(16, 1371, 228, 10.0);
        let pack = synthetic_pack(2, 16, (0..228).collect(), vec![]);
        assert_relative_eq!(pack_cost(&pack, &params), 47.907, epsilon = 1e-3);
    }

    #[test]
    fn pack_cost_full_space_and_all_normal() {
        let params = EncodingParams::new(8, 100, 10, 10.0);
        let full = synthetic_pack(8, 8, (0..5).collect(), vec![]);
        assert_relative_eq!(
            pack_cost(&full, &params),
            log_star(8) + 2.0 * 8.0 * 10.0,
            epsilon = 1e-9
        );
        // All-normal pack: subset identity is free but the count is not.
        let all_normal = synthetic_pack(1, 8, vec![], (10..14).collect());
        let cost = pack_cost(&all_normal, &params);
        assert_relative_eq!(
            cost,
            log_star(1) + log2_binomial(8, 1) + 20.0 + log_star(4) + 0.0,
            epsilon = 1e-9
        );
        assert!(log_star(4) > 0.0);
    }

    #[test]
    fn pack_cost_full_shape_flag() {
        let params = EncodingParams::new(16, 100, 10, 10.0).with_full_shape_cost(true);
        let pack = synthetic_pack(2, 16, (0..5).collect(), vec![]);
        // d_k (d_k + 1) = 6 coordinates at 10 bits each.
        assert_relative_eq!(
            pack_cost(&pack, &params),
            1.0 + log2_binomial(16, 2) + 60.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn pack_cost_increases_with_exceptions() {
        let params = EncodingParams::new(8, 1000, 50, 10.0);
        let mut prev = f64::NEG_INFINITY;
        // Fixed m_k = 40 while n_k <= m_k / 2: adding exceptions costs bits.
        for nk in 0..=20usize {
            let pack = synthetic_pack(2, 8, (0..40 - nk).collect(), (100..100 + nk).collect());
            let cost = pack_cost(&pack, &params);
            assert!(cost > prev, "cost fell at n_k = {nk}");
            prev = cost;
        }
    }

    #[test]
    fn packing_cost_composition() {
        let params = EncodingParams::new(16, 1371, 228, 10.0);
        assert_eq!(packing_cost(&[], &params), 0.0);
        let pack = synthetic_pack(2, 16, (0..228).collect(), vec![]);
        let one = packing_cost(std::slice::from_ref(&pack), &params);
        assert_relative_eq!(one, 47.907, epsilon = 1e-3);
        let two = packing_cost(&[pack.clone(), pack.clone()], &params);
        assert_relative_eq!(two, log_star(2) + 2.0 * pack_cost(&pack, &params), epsilon = 1e-9);
    }

    fn tiny_dataset(m: usize, a: usize, d: usize) -> LabeledDataset {
        let points = Array2::from_shape_fn((m, d), |(i, j)| ((i * 7 + j) % 10) as f64 / 10.0);
        let labels: Vec<bool> = (0..m).map(|i| i < a).collect();
        LabeledDataset::from_parts(points, labels, (0..d).map(|j| format!("f{j}")).collect())
            .unwrap()
    }

    #[test]
    fn description_length_empty_packing() {
        // a=8, d=120, f at 10 bits: naive cost 9600 with zero savings.
        let ds = tiny_dataset(88, 8, 120);
        let params = EncodingParams::new(120, 88, 8, 10.0);
        let report = description_length(&[], &ds, &params);
        assert_relative_eq!(report.total_bits, 9600.0);
        assert_relative_eq!(report.naive_bits, 9600.0);
        assert_relative_eq!(report.savings_percent, 0.0);
        assert_eq!(report.outlier_ids.len(), 8);
    }

    #[test]
    fn description_length_full_coverage_saves() {
        let ds = tiny_dataset(88, 8, 120);
        let params = EncodingParams::new(120, 88, 8, 10.0);
        let pack = synthetic_pack(1, 120, (0..8).collect(), vec![]);
        let report = description_length(std::slice::from_ref(&pack), &ds, &params);
        assert!(report.outlier_ids.is_empty());
        assert!(report.savings_percent > 99.0, "{}", report.savings_percent);
    }

    #[test]
    fn description_length_pure_overhead() {
        let ds = tiny_dataset(88, 8, 120);
        let params = EncodingParams::new(120, 88, 8, 10.0);
        // Pack covering nothing: total exceeds naive by the model bits.
        let pack = synthetic_pack(1, 120, vec![], vec![]);
        let report = description_length(std::slice::from_ref(&pack), &ds, &params);
        assert_relative_eq!(
            report.total_bits,
            report.naive_bits + packing_cost(std::slice::from_ref(&pack), &params),
            epsilon = 1e-9
        );
        assert!(report.savings_percent < 0.0);
    }

    fn pool_fixture(ambient: usize) -> (Vec<Pack>, EncodingParams) {
        let pool = vec![
            synthetic_pack(1, ambient, vec![0, 1, 2], vec![]),
            synthetic_pack(2, ambient, vec![2, 3], vec![50]),
            synthetic_pack(1, ambient, vec![0, 1, 2, 3], vec![51, 52]),
            synthetic_pack(3, ambient, vec![4], vec![]),
            synthetic_pack(1, ambient, vec![5, 6], vec![]),
        ];
        let params = EncodingParams::new(ambient, 100, 8, 10.0).with_pool(&pool);
        (pool, params)
    }

    #[test]
    fn reduction_objective_empty_is_pool_cost() {
        let (pool, params) = pool_fixture(12);
        let r = reduction_objective(&[], &pool, &params).unwrap();
        assert_eq!(r, params.candidate_pool_cost);
    }

    #[test]
    fn redundant_pack_strictly_decreases_objective() {
        let (pool, params) = pool_fixture(12);
        // Pack 0 covers {0,1,2}; pack 2 covers {0,1,2,3}: adding pack 0 on
        // top of pack 2 brings no new анomalies and only costs bits.
        let with = reduction_objective(&[2, 0], &pool, &params).unwrap();
        let without = reduction_objective(&[2], &pool, &params).unwrap();
        assert!(with < without);
        let expected_drop = pack_cost(&pool[0], &params) + log_star(2) - log_star(1);
        assert_relative_eq!(without - with, expected_drop, epsilon = 1e-9);
    }

    #[test]
    fn argmax_reduction_equals_argmin_description_length() {
        let (pool, params) = pool_fixture(12);
        let ds = tiny_dataset(100, 8, 12);
        let mut best_r = (Vec::new(), f64::NEG_INFINITY);
        let mut best_l = (Vec::new(), f64::INFINITY);
        for mask in 0..(1u32 << pool.len()) {
            let subset: Vec<usize> =
                (0..pool.len()).filter(|i| mask & (1 << i) != 0).collect();
            let packs: Vec<Pack> = subset.iter().map(|&i| pool[i].clone()).collect();
            let r = reduction_objective(&subset, &pool, &params).unwrap();
            let l = description_length(&packs, &ds, &params).total_bits;
            if r > best_r.1 {
                best_r = (subset.clone(), r);
            }
            if l < best_l.1 {
                best_l = (subset, l);
            }
            // Affine-complement identity between the two formulations.
            let naive = params.anomaly_count as f64 * params.unit_cost();
            assert_relative_eq!(
                r + l,
                params.candidate_pool_cost + naive,
                epsilon = 1e-6
            );
        }
        assert_eq!(best_r.0, best_l.0);
    }

    #[test]
    fn fixed_k_objective_is_submodular() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pool: Vec<Pack> = (0..15)
            .map(|_| {
                let cover: Vec<usize> =
                    (0..40).filter(|_| rng.random::<f64>() < 0.3).collect();
                let normals: Vec<usize> = (100..110).filter(|_| rng.random::<f64>() < 0.2).collect();
                synthetic_pack(1 + rng.random_range(0..3), 20, cover, normals)
            })
            .collect();
        let params = EncodingParams::new(20, 200, 40, 10.0).with_pool(&pool);
        for _ in 0..1000 {
            let t: Vec<usize> = (0..pool.len()).filter(|_| rng.random::<f64>() < 0.4).collect();
            if t.len() == pool.len() {
                continue;
            }
            let s: Vec<usize> = t.iter().cloned().filter(|_| rng.random::<f64>() < 0.6).collect();
            let outside: Vec<usize> =
                (0..pool.len()).filter(|i| !t.contains(i)).collect();
            let p = outside[rng.random_range(0..outside.len())];
            let gain = |base: &[usize]| {
                let mut with = base.to_vec();
                with.push(p);
                reduction_objective_fixed_k(&with, &pool, &params).unwrap()
                    - reduction_objective_fixed_k(base, &pool, &params).unwrap()
            };
            assert!(
                gain(&s) >= gain(&t) - 1e-9,
                "diminishing returns violated: S={s:?} T={t:?} p={p}"
            );
        }
    }

    #[test]
    fn non_monotonicity_witness() {
        let (pool, params) = pool_fixture(12);
        let small = reduction_objective_fixed_k(&[2], &pool, &params).unwrap();
        let large = reduction_objective_fixed_k(&[2, 0], &pool, &params).unwrap();
        assert!(large < small);
    }

    #[test]
    fn subset_validation() {
        let (pool, params) = pool_fixture(12);
        assert!(reduction_objective(&[9], &pool, &params).is_err());
        assert!(reduction_objective(&[1, 1], &pool, &params).is_err());
    }
}
