//! Per-feature density estimation over the anomalous points and extraction
//! of high-density intervals that seed the rectangle search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::lattice::HyperRectangle;

/// Number of sample locations for every density curve.
pub const KDE_SAMPLES: usize = 512;

/// Spacing between consecutive curve samples on [0, 1].
pub fn grid_spacing() -> f64 {
    1.0 / (KDE_SAMPLES as f64 - 1.0)
}

/// A closed interval inside the normalized feature range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lb: f64,
    pub ub: f64,
}

impl Interval {
    pub fn new(lb: f64, ub: f64) -> Self {
        debug_assert!(lb <= ub);
        Self { lb, ub }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lb <= v && v <= self.ub
    }

    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }
}

/// Gaussian kernel density evaluated on a fixed grid spanning [0, 1].
#[derive(Clone, Debug)]
pub struct DensityCurve {
    pub sample_xs: Vec<f64>,
    pub densities: Vec<f64>,
    pub bandwidth: f64,
}

/// Rule-of-thumb bandwidth: `0.9 * min(sd, IQR/1.34) * n^(-1/5)`, falling
/// back to the standard deviation alone when the IQR is zero.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let distinct = sorted.windows(2).filter(|w| w[0] != w[1]).count() + 1;
    if sorted.len() < 2 || distinct < 2 {
        return Err(Error::DegenerateValues);
    }
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let iqr = quantile_linear(&sorted, 0.75) - quantile_linear(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Linear-interpolation quantile on a pre-sorted slice (the numpy default).
fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Evaluates the Gaussian-kernel density of `values` at [`KDE_SAMPLES`]
/// equally spaced locations over [0, 1]. No boundary correction is applied,
/// so mass near 0 and 1 leaks outside the range.
pub fn estimate_density(values: &[f64], bandwidth: f64) -> Result<DensityCurve> {
    if values.is_empty() {
        return Err(Error::input("cannot estimate density of an empty sample"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::input(format!("bandwidth must be positive: {bandwidth}")));
    }
    let sample_xs: Vec<f64> = (0..KDE_SAMPLES)
        .map(|i| i as f64 / (KDE_SAMPLES as f64 - 1.0))
        .collect();
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let densities: Vec<f64> = sample_xs
        .iter()
        .map(|&x| {
            values
                .iter()
                .map(|&v| {
                    let z = (x - v) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(DensityCurve {
        sample_xs,
        densities,
        bandwidth,
    })
}

/// Maximal runs of samples whose density strictly exceeds the `q`-th
/// percentile (nearest-rank over the curve's own samples). A run of length
/// one is widened by one grid step on each side, clipped to [0, 1].
pub fn extract_high_density_intervals(curve: &DensityCurve, q: f64) -> Vec<Interval> {
    assert!(q > 0.0 && q < 100.0, "quantile percent out of range: {q}");
    let mut sorted = curve.densities.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    let threshold = sorted[rank.clamp(1, sorted.len()) - 1];

    let n = curve.densities.len();
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..=n {
        let above = i < n && curve.densities[i] > threshold;
        match (run_start, above) {
            (None, true) => run_start = Some(i),
            (Some(s), false) => {
                let e = i - 1;
                let (lo, hi) = if s == e {
                    (s.saturating_sub(1), (e + 1).min(n - 1))
                } else {
                    (s, e)
                };
                intervals.push(Interval::new(curve.sample_xs[lo], curve.sample_xs[hi]));
                run_start = None;
            }
            _ => {}
        }
    }
    intervals
}

/// Builds the 1-dimensional seed rectangles: for every non-degenerate
/// feature and every quantile threshold, the high-density intervals of the
/// feature's anomalous values become single-sided rectangles with computed
/// mass and impurity. Duplicate (feature, interval) pairs are dropped.
pub fn seed_rectangles(dataset: &LabeledDataset, quantiles: &[f64]) -> Vec<HyperRectangle> {
    assert!(dataset.is_normalized(), "seed_rectangles needs a normalized dataset");
    assert!(!quantiles.is_empty());
    let record = dataset.normalization_record().unwrap();

    let per_feature: Vec<Vec<(usize, Interval)>> = (0..dataset.num_features())
        .into_par_iter()
        .map(|feature| {
            if record[feature].degenerate {
                return Vec::new();
            }
            let values = dataset.anomaly_feature_values(feature);
            let bandwidth = match silverman_bandwidth(&values) {
                Ok(b) => b,
                Err(_) => return Vec::new(),
            };
            let curve = match estimate_density(&values, bandwidth) {
                Ok(c) => c,
                Err(_) => return Vec::new(),
            };
            let mut sides = Vec::new();
            for &q in quantiles {
                for interval in extract_high_density_intervals(&curve, q) {
                    sides.push((feature, interval));
                }
            }
            sides
        })
        .collect();

    let mut seen = std::collections::HashSet::new();
    let mut rects: Vec<HyperRectangle> = Vec::new();
    for (feature, interval) in per_feature.into_iter().flatten() {
        if seen.insert((feature, interval.lb.to_bits(), interval.ub.to_bits())) {
            rects.push(HyperRectangle::new(vec![(feature, interval)]));
        }
    }
    rects
        .par_iter_mut()
        .for_each(|r| r.recount(dataset));
    rects
}
