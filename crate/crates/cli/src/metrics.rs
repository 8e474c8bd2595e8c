//! Summary metrics of a saved packing: the interpretability measures, the
//! recorded savings, and ranking quality against a labeled CSV.

use std::path::Path;

use serde::Serialize;

use crate::detect::run_detect;
use crate::error::Result;
use crate::packing_file::PackingFile;

#[derive(Debug, Serialize)]
pub struct MetricsReport {
    pub num_groups: usize,
    pub avg_rule_length: f64,
    pub avg_impurity_fraction: f64,
    pub avg_interval_width: f64,
    pub savings_percent: f64,
    pub auprc: Option<f64>,
}

pub fn run_metrics(
    packing_path: &Path,
    input_path: &Path,
    label_column: &str,
    anomaly_value: &str,
) -> Result<MetricsReport> {
    let file = PackingFile::load(packing_path)?;
    let detect = run_detect(packing_path, input_path, Some(label_column), anomaly_value)?;
    let normals = detect
        .rows
        .iter()
        .filter(|r| r.label == Some(false))
        .count();

    if file.packs.is_empty() {
        return Ok(MetricsReport {
            num_groups: 0,
            avg_rule_length: 0.0,
            avg_impurity_fraction: 0.0,
            avg_interval_width: 0.0,
            savings_percent: file.savings_percent,
            auprc: detect.auprc,
        });
    }
    let k = file.packs.len() as f64;
    let avg_rule_length = file
        .packs
        .iter()
        .map(|p| p.features.len() as f64)
        .sum::<f64>()
        / k;
    let avg_impurity_fraction = file
        .packs
        .iter()
        .map(|p| p.impurity as f64 / normals.max(1) as f64)
        .sum::<f64>()
        / k;
    let widths: Vec<f64> = file
        .packs
        .iter()
        .flat_map(|p| {
            p.center.iter().zip(&p.radii).map(|(c, r)| {
                let lb = (c - r).max(0.0);
                let ub = (c + r).min(1.0);
                ub - lb
            })
        })
        .collect();
    Ok(MetricsReport {
        num_groups: file.packs.len(),
        avg_rule_length,
        avg_impurity_fraction,
        avg_interval_width: widths.iter().sum::<f64>() / widths.len() as f64,
        savings_percent: file.savings_percent,
        auprc: detect.auprc,
    })
}
