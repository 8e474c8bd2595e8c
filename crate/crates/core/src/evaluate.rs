//! Detection scoring, ranking metrics, interpretability measures, and the
//! planted-pattern synthetic generator.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::density::Interval;
use crate::error::{Error, Result};
use crate::refine::{feature_rules, Pack};

/// Anomaly score of one instance: the maximum boundary value over the
/// packing, each pack evaluated on its own subspace coordinates. An empty
/// packing scores negative infinity.
pub fn score_instance(packing: &[Pack], x: &[f64]) -> f64 {
    packing
        .iter()
        .map(|p| {
            let mut h = p.params.offset;
            for (z, &f) in p.params.subspace.iter().enumerate() {
                h += p.params.quad[z] * x[f] * x[f] + p.params.linear[z] * x[f];
            }
            h
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Area under the precision-recall curve of a score ranking (trapezoid over
/// the full ranking, ties broken by stable index, anchored at recall 0 with
/// the first prefix's precision).
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::input("scores and labels differ in length"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::input("no positive labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must not be NaN")
            .then(a.cmp(&b))
    });

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut prev_recall = 0.0;
    let mut prev_precision = 1.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            tp += 1;
        }
        let precision = tp as f64 / (rank + 1) as f64;
        let recall = tp as f64 / positives as f64;
        if rank == 0 {
            prev_precision = precision; // anchor the curve at recall 0
        }
        area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
        prev_recall = recall;
        prev_precision = precision;
    }
    Ok(area)
}

/// The four interpretability measures of a packing.
#[derive(Clone, Debug, Serialize)]
pub struct InterpretabilityReport {
    pub num_groups: usize,
    /// Mean pack dimensionality.
    pub avg_rule_length: f64,
    /// Mean enclosed-normal count divided by the number of normal points.
    pub avg_impurity_fraction: f64,
    /// Mean clipped feature-rule width.
    pub avg_interval_width: f64,
}

pub fn interpretability_report(
    packing: &[Pack],
    dataset: &LabeledDataset,
) -> InterpretabilityReport {
    if packing.is_empty() {
        return InterpretabilityReport {
            num_groups: 0,
            avg_rule_length: 0.0,
            avg_impurity_fraction: 0.0,
            avg_interval_width: 0.0,
        };
    }
    let k = packing.len() as f64;
    let avg_rule_length = packing.iter().map(|p| p.subspace_dim() as f64).sum::<f64>() / k;
    let avg_impurity_fraction = packing
        .iter()
        .map(|p| p.impurity() as f64 / dataset.num_normals() as f64)
        .sum::<f64>()
        / k;
    let widths: Vec<f64> = packing
        .iter()
        .flat_map(|p| {
            feature_rules(p, dataset)
                .rules
                .into_iter()
                .map(|r| r.interval.width())
        })
        .collect();
    InterpretabilityReport {
        num_groups: packing.len(),
        avg_rule_length,
        avg_impurity_fraction,
        avg_interval_width: widths.iter().sum::<f64>() / widths.len() as f64,
    }
}

/// Parameters of the planted-pattern generator.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub num_points: usize,
    pub num_features: usize,
    pub num_packs: usize,
    pub max_pack_dim: usize,
    pub anomaly_fraction: f64,
    /// Width of each planted per-feature interval.
    pub range_width: f64,
    pub seed: u64,
}

/// A planted ground-truth pattern: one interval per chosen feature.
#[derive(Clone, Debug, Serialize)]
pub struct PlantedPack {
    pub features: Vec<usize>,
    pub intervals: Vec<Interval>,
}

impl PlantedPack {
    pub fn contains(&self, row: ndarray::ArrayView1<'_, f64>) -> bool {
        self.features
            .iter()
            .zip(&self.intervals)
            .all(|(&f, iv)| iv.contains(row[f]))
    }
}

const HISTOGRAM_BINS: usize = 20;

/// Generates a labeled dataset with planted anomaly patterns. Anomalies are
/// assigned round-robin to packs and sampled uniformly inside their pack's
/// intervals (uniform on [0,1] off the pack's subspace). Normals are drawn
/// per feature from the complement-weighted histogram of the anomaly
/// values, so they avoid the planted ranges up to a small floor.
pub fn generate_synthetic(config: &SynthConfig) -> Result<(LabeledDataset, Vec<PlantedPack>)> {
    if config.num_packs < 1 {
        return Err(Error::input("num_packs must be at least 1"));
    }
    if config.max_pack_dim < 1 || config.max_pack_dim > config.num_features {
        return Err(Error::input("max_pack_dim must be in 1..=num_features"));
    }
    if !(config.range_width > 0.0 && config.range_width < 1.0) {
        return Err(Error::input("range_width must lie strictly inside (0, 1)"));
    }
    if !(config.anomaly_fraction > 0.0 && config.anomaly_fraction < 1.0) {
        return Err(Error::input("anomaly_fraction must lie strictly inside (0, 1)"));
    }
    let anomalies = ((config.num_points as f64) * config.anomaly_fraction).round() as usize;
    if anomalies == 0 {
        return Err(Error::input("no anomalies to plant"));
    }
    if anomalies >= config.num_points {
        return Err(Error::input("anomaly_fraction leaves no normal points"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.num_features;

    let planted: Vec<PlantedPack> = (0..config.num_packs)
        .map(|_| {
            let dim = rng.random_range(1..=config.max_pack_dim);
            let mut features = rand::seq::index::sample(&mut rng, d, dim).into_vec();
            features.sort_unstable();
            let intervals = features
                .iter()
                .map(|_| {
                    let lo = rng.random::<f64>() * (1.0 - config.range_width);
                    Interval::new(lo, lo + config.range_width)
                })
                .collect();
            PlantedPack { features, intervals }
        })
        .collect();

    let mut points = Array2::zeros((config.num_points, d));
    for i in 0..anomalies {
        let pack = &planted[i % config.num_packs];
        for j in 0..d {
            let v = match pack.features.iter().position(|&f| f == j) {
                Some(z) => {
                    let iv = pack.intervals[z];
                    iv.lb + rng.random::<f64>() * iv.width()
                }
                None => rng.random::<f64>(),
            };
            points[[i, j]] = v;
        }
    }

    // Per-feature complement histograms of the anomaly values.
    let weights: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut hist = [0.0f64; HISTOGRAM_BINS];
            for i in 0..anomalies {
                let bin = ((points[[i, j]] * HISTOGRAM_BINS as f64) as usize)
                    .min(HISTOGRAM_BINS - 1);
                hist[bin] += 1.0;
            }
            let max = hist.iter().cloned().fold(0.0, f64::max);
            hist.iter().map(|h| max - h + 0.01 * max).collect()
        })
        .collect();
    for i in anomalies..config.num_points {
        for j in 0..d {
            let w = &weights[j];
            let total: f64 = w.iter().sum();
            let mut draw = rng.random::<f64>() * total;
            let mut bin = HISTOGRAM_BINS - 1;
            for (b, &wb) in w.iter().enumerate() {
                if draw < wb {
                    bin = b;
                    break;
                }
                draw -= wb;
            }
            let width = 1.0 / HISTOGRAM_BINS as f64;
            points[[i, j]] = (bin as f64 + rng.random::<f64>()) * width;
        }
    }

    let labels: Vec<bool> = (0..config.num_points).map(|i| i < anomalies).collect();
    let names: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    Ok((LabeledDataset::from_parts(points, labels, names)?, planted))
}
