//! On-disk representation of a learned packing.
//!
//! The file is self-contained for detection: besides the pack boundaries it
//! records the feature names and the raw min/max used for normalization, so
//! a later invocation can map raw-unit inputs into the learned space.

use std::path::Path;

use serde::{Deserialize, Serialize};

use packs::dataset::LabeledDataset;
use packs::refine::{BoundaryParams, Pack, Provenance};

use crate::error::{CliError, Result};

pub const PACKING_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PackingFile {
    pub version: u32,
    pub seed: u64,
    pub encoding: EncodingMeta,
    pub normalization: Vec<FeatureNorm>,
    pub packs: Vec<PackEntry>,
    pub outlier_ids: Vec<usize>,
    pub total_bits: f64,
    pub naive_bits: f64,
    pub savings_percent: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncodingMeta {
    pub d: usize,
    pub m: usize,
    pub log2_f: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PackEntry {
    pub features: Vec<String>,
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub w0: f64,
    pub mass: usize,
    pub impurity: usize,
    pub anomaly_ids: Vec<usize>,
    pub normal_exception_ids: Vec<usize>,
}

impl PackingFile {
    pub fn build(
        dataset: &LabeledDataset,
        packing: &[Pack],
        outlier_ids: Vec<usize>,
        total_bits: f64,
        naive_bits: f64,
        savings_percent: f64,
        log2_f: f64,
        seed: u64,
    ) -> Self {
        let record = dataset
            .normalization_record()
            .expect("packing files require a normalized dataset");
        let names = dataset.feature_names();
        let packs = packing
            .iter()
            .map(|p| PackEntry {
                features: p
                    .params
                    .subspace
                    .iter()
                    .map(|&f| names[f].clone())
                    .collect(),
                center: p.center.clone(),
                radii: p.radii.clone(),
                u: p.params.quad.clone(),
                w: p.params.linear.clone(),
                w0: p.params.offset,
                mass: p.mass(),
                impurity: p.impurity(),
                anomaly_ids: p.covered_anomalies.clone(),
                normal_exception_ids: p.enclosed_normals.clone(),
            })
            .collect();
        PackingFile {
            version: PACKING_FORMAT_VERSION,
            seed,
            encoding: EncodingMeta {
                d: dataset.num_features(),
                m: dataset.num_points(),
                log2_f,
            },
            normalization: names
                .iter()
                .zip(record)
                .map(|(name, scale)| FeatureNorm {
                    name: name.clone(),
                    min: scale.min,
                    max: scale.max,
                })
                .collect(),
            packs,
            outlier_ids,
            total_bits,
            naive_bits,
            savings_percent,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
        let file: PackingFile = serde_json::from_str(&text)
            .map_err(|e| CliError::schema(format!("{}: {e}", path.display())))?;
        if file.version != PACKING_FORMAT_VERSION {
            return Err(CliError::schema(format!(
                "unsupported packing version {}",
                file.version
            )));
        }
        Ok(file)
    }

    /// Rebuilds in-memory packs, with subspace indices referring to this
    /// file's own feature order.
    pub fn to_packs(&self) -> Result<Vec<Pack>> {
        self.packs
            .iter()
            .map(|entry| {
                let subspace: Vec<usize> = entry
                    .features
                    .iter()
                    .map(|name| {
                        self.normalization
                            .iter()
                            .position(|f| &f.name == name)
                            .ok_or_else(|| {
                                CliError::schema(format!(
                                    "pack feature {name:?} missing from the normalization table"
                                ))
                            })
                    })
                    .collect::<Result<_>>()?;
                Ok(Pack {
                    params: BoundaryParams {
                        subspace,
                        quad: entry.u.clone(),
                        linear: entry.w.clone(),
                        offset: entry.w0,
                    },
                    center: entry.center.clone(),
                    inv_shape: entry.radii.iter().map(|r| 1.0 / (r * r)).collect(),
                    radii: entry.radii.clone(),
                    covered_anomalies: entry.anomaly_ids.clone(),
                    enclosed_normals: entry.normal_exception_ids.clone(),
                    provenance: Provenance {
                        rectangle: 0,
                        alpha: 1.0,
                        lambda: 1.0,
                    },
                })
            })
            .collect()
    }
}
