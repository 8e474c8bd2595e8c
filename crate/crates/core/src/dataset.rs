//! Labeled point sets: loading, validation, normalization, and folds.
//!
//! The dataset is the single source of truth for point identity. Point IDs
//! are stable row indices; every downstream set (covered anomalies, enclosed
//! normals) refers back to these IDs rather than copying coordinates.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature min/max from the raw data, kept so that rules learned in the
/// normalized space can be reported in raw units.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: f64,
    pub max: f64,
    /// Constant feature: maps to 0.0 everywhere and is barred from seeding.
    pub degenerate: bool,
}

impl FeatureScale {
    /// Maps a normalized coordinate back to raw units.
    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }
}

/// `m` points in `d` features with a binary anomaly label per point.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    points: Array2<f64>,
    labels: Vec<bool>,
    feature_names: Vec<String>,
    anomaly_ids: Vec<usize>,
    normal_ids: Vec<usize>,
    normalization: Option<Vec<FeatureScale>>,
}

impl LabeledDataset {
    /// Builds a dataset from a row-major matrix and labels (`true` = anomalous).
    pub fn from_parts(
        points: Array2<f64>,
        labels: Vec<bool>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::input("dataset has zero rows"));
        }
        if points.nrows() != labels.len() {
            return Err(Error::input(format!(
                "{} rows but {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        if points.ncols() != feature_names.len() {
            return Err(Error::input(format!(
                "{} columns but {} feature names",
                points.ncols(),
                feature_names.len()
            )));
        }
        if let Some(v) = points.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite coordinate {v}")));
        }
        let anomaly_ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
        let normal_ids: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
        if anomaly_ids.is_empty() {
            return Err(Error::input("no anomalous points in dataset"));
        }
        if normal_ids.is_empty() {
            return Err(Error::input("no normal points in dataset"));
        }
        Ok(Self {
            points,
            labels,
            feature_names,
            anomaly_ids,
            normal_ids,
            normalization: None,
        })
    }

    pub fn num_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.points.ncols()
    }

    pub fn num_anomalies(&self) -> usize {
        self.anomaly_ids.len()
    }

    pub fn num_normals(&self) -> usize {
        self.normal_ids.len()
    }

    pub fn is_anomaly(&self, id: usize) -> bool {
        self.labels[id]
    }

    pub fn point(&self, id: usize) -> ArrayView1<'_, f64> {
        self.points.row(id)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn anomaly_ids(&self) -> &[usize] {
        &self.anomaly_ids
    }

    pub fn normal_ids(&self) -> &[usize] {
        &self.normal_ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    /// Raw (min, max) per feature; `None` until [`normalize`](Self::normalize) ran.
    pub fn normalization_record(&self) -> Option<&[FeatureScale]> {
        self.normalization.as_deref()
    }

    /// Values of one feature restricted to the anomalous points.
    pub fn anomaly_feature_values(&self, feature: usize) -> Vec<f64> {
        self.anomaly_ids
            .iter()
            .map(|&id| self.points[[id, feature]])
            .collect()
    }

    /// Marks a dataset whose coordinates already live in [0, 1] as
    /// normalized with the identity scale, leaving the values untouched.
    pub fn assume_normalized(mut self) -> Result<Self> {
        if let Some(v) = self.points.iter().find(|v| **v < 0.0 || **v > 1.0) {
            return Err(Error::input(format!(
                "coordinate {v} outside [0, 1]; use normalize() instead"
            )));
        }
        self.normalization = Some(
            (0..self.num_features())
                .map(|_| FeatureScale {
                    min: 0.0,
                    max: 1.0,
                    degenerate: false,
                })
                .collect(),
        );
        Ok(self)
    }

    /// Min-max scales every feature to [0, 1] using the min/max over all
    /// points. Constant features map to 0.0 and are flagged as degenerate.
    /// Already-normalized datasets are returned unchanged, so the raw-unit
    /// record survives repeated calls.
    pub fn normalize(&self) -> Self {
        if self.normalization.is_some() {
            return self.clone();
        }
        let mut scales = Vec::with_capacity(self.num_features());
        let mut points = self.points.clone();
        for j in 0..self.num_features() {
            let col = self.points.column(j);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let degenerate = max == min;
            for v in points.column_mut(j).iter_mut() {
                *v = if degenerate {
                    0.0
                } else {
                    ((*v - min) / (max - min)).clamp(0.0, 1.0)
                };
            }
            scales.push(FeatureScale {
                min,
                max,
                degenerate,
            });
        }
        Self {
            points,
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
            anomaly_ids: self.anomaly_ids.clone(),
            normal_ids: self.normal_ids.clone(),
            normalization: Some(scales),
        }
    }
}

/// Reads a labeled CSV: header row required, label column selected by name,
/// all other columns must parse as finite reals. Row order becomes point IDs.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    anomaly_value: &str,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::input(format!("cannot open {}: {e}", path.display())),
            _ => Error::input(format!("cannot read {}: {e}", path.display())),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::input(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut seen = std::collections::HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::input(format!("duplicate column name {h:?}")));
        }
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::input(format!("label column {label_column:?} not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::input(format!("row {}: {e}", row_idx + 1)))?;
        if record.len() != headers.len() {
            return Err(Error::input(format!(
                "row {}: expected {} fields, found {}",
                row_idx + 1,
                headers.len(),
                record.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            if col_idx == label_idx {
                labels.push(field == anomaly_value);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::input(format!(
                        "non-numeric value {:?} at row {}, column {}",
                        field,
                        row_idx + 1,
                        headers[col_idx]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::input(format!(
                        "non-finite value at row {}, column {}",
                        row_idx + 1,
                        headers[col_idx]
                    )));
                }
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::input(format!("{}: no data rows", path.display())));
    }
    let rows = labels.len();
    let cols = feature_names.len();
    let points = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::input(format!("shape error: {e}")))?;
    LabeledDataset::from_parts(points, labels, feature_names)
}

/// One train/test index partition.
#[derive(Clone, Debug)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits the dataset into `k` folds preserving the anomaly/normal ratio
/// within one point per fold. When there are fewer anomalies than folds the
/// split degrades to leave-one-out over the anomalies. Deterministic per seed.
pub fn stratified_folds(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::input("fold count must be at least 2"));
    }
    if k > dataset.num_points() {
        return Err(Error::input(format!(
            "fold count {k} exceeds dataset size {}",
            dataset.num_points()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anomalies = dataset.anomaly_ids().to_vec();
    let mut normals = dataset.normal_ids().to_vec();
    anomalies.shuffle(&mut rng);
    normals.shuffle(&mut rng);

    let folds = if dataset.num_anomalies() < k {
        dataset.num_anomalies()
    } else {
        k
    };
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); folds];
    for (i, id) in anomalies.into_iter().enumerate() {
        tests[i % folds].push(id);
    }
    for (i, id) in normals.into_iter().enumerate() {
        tests[i % folds].push(id);
    }
    let all: std::collections::HashSet<usize> = (0..dataset.num_points()).collect();
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let test_set: std::collections::HashSet<usize> = test.iter().cloned().collect();
            let mut train: Vec<usize> = all.difference(&test_set).cloned().collect();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect())
}

/// Builds a new dataset from a subset of point IDs, keeping labels and any
/// normalization record. Errors if the subset loses one of the classes.
pub fn subset(dataset: &LabeledDataset, ids: &[usize]) -> Result<LabeledDataset> {
    let mut points = Array2::zeros((ids.len(), dataset.num_features()));
    let mut labels = Vec::with_capacity(ids.len());
    for (row, &id) in ids.iter().enumerate() {
        points.row_mut(row).assign(&dataset.point(id));
        labels.push(dataset.is_anomaly(id));
    }
    let mut out = LabeledDataset::from_parts(points, labels, dataset.feature_names().to_vec())?;
    out.normalization = dataset.normalization.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_basic() {
        let f = write_csv("f1,f2,y\n1.0,2.0,1\n3.0,4.0,0\n5.0,6.0,1\n7.0,8.0,0\n");
        let ds = load_csv(f.path(), "y", "1").unwrap();
        assert_eq!(ds.num_points(), 4);
        assert_eq!(ds.num_features(), 2);
        assert_eq!(ds.num_anomalies(), 2);
        assert_eq!(ds.num_normals(), 2);
        assert_eq!(ds.anomaly_ids(), &[0, 2]);
        assert_eq!(ds.feature_names(), &["f1".to_string(), "f2".to_string()]);
    }

    #[test]
    fn load_csv_reports_bad_cell() {
        let f = write_csv("f1,f2,y\n1.0,2.0,1\n3.0,4.0,0\n5.0,abc,1\n");
        let err = load_csv(f.path(), "y", "1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("column f2"), "{msg}");
    }

    #[test]
    fn load_csv_missing_label_column() {
        let f = write_csv("f1,f2\n1.0,2.0\n");
        let err = load_csv(f.path(), "y", "1").unwrap_err();
        assert!(err.to_string().contains("label column"));
    }

    #[test]
    fn load_csv_single_class_rejected() {
        let f = write_csv("f1,y\n1.0,1\n2.0,1\n");
        assert!(load_csv(f.path(), "y", "1").is_err());
    }

    #[test]
    fn load_csv_missing_file() {
        let err = load_csv("/nonexistent/nope.csv", "y", "1").unwrap_err();
        assert!(err.to_string().contains("cannot open"));
    }

    #[test]
    fn normalize_min_max() {
        let ds = LabeledDataset::from_parts(
            array![[2.0], [4.0], [6.0]],
            vec![true, false, false],
            vec!["a".into()],
        )
        .unwrap();
        let norm = ds.normalize();
        assert_eq!(norm.points().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert!(norm.is_normalized());
    }

    #[test]
    fn normalize_constant_feature_degenerate() {
        let ds = LabeledDataset::from_parts(
            array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]],
            vec![true, false, false],
            vec!["c".into(), "v".into()],
        )
        .unwrap();
        let norm = ds.normalize();
        assert_eq!(norm.points().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
        let rec = norm.normalization_record().unwrap();
        assert!(rec[0].degenerate);
        assert!(!rec[1].degenerate);
    }

    #[test]
    fn normalize_features_independent() {
        let ds = LabeledDataset::from_parts(
            array![[0.0, -1.0], [10.0, 1.0]],
            vec![true, false],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let norm = ds.normalize();
        assert_eq!(norm.point(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(norm.point(1).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn normalize_idempotent() {
        let ds = LabeledDataset::from_parts(
            array![[2.0], [4.0], [6.0]],
            vec![true, false, false],
            vec!["a".into()],
        )
        .unwrap();
        let once = ds.normalize();
        let twice = once.normalize();
        assert_eq!(once.points(), twice.points());
        // Raw-unit record survives.
        assert_eq!(twice.normalization_record().unwrap()[0].min, 2.0);
    }

    #[test]
    fn denormalize_round_trip() {
        let ds = LabeledDataset::from_parts(
            array![[2.0], [4.5], [6.0]],
            vec![true, false, false],
            vec!["a".into()],
        )
        .unwrap();
        let norm = ds.normalize();
        let rec = norm.normalization_record().unwrap()[0];
        for id in 0..3 {
            let raw = ds.points()[[id, 0]];
            let back = rec.denormalize(norm.points()[[id, 0]]);
            assert!((back - raw).abs() <= 1e-9 * raw.abs().max(1.0));
        }
    }

    #[test]
    fn folds_exact_divisibility() {
        let points = Array2::from_shape_fn((9, 1), |(i, _)| i as f64);
        let labels = vec![true, true, true, false, false, false, false, false, false];
        let ds = LabeledDataset::from_parts(points, labels, vec!["a".into()]).unwrap();
        let folds = stratified_folds(&ds, 3, 7).unwrap();
        assert_eq!(folds.len(), 3);
        for fold in &folds {
            let anomalies = fold.test.iter().filter(|&&id| ds.is_anomaly(id)).count();
            assert_eq!(anomalies, 1);
            assert_eq!(fold.test.len(), 3);
        }
    }

    #[test]
    fn folds_leave_one_out_fallback() {
        let points = Array2::from_shape_fn((8, 1), |(i, _)| i as f64);
        let labels = vec![true, true, false, false, false, false, false, false];
        let ds = LabeledDataset::from_parts(points, labels, vec!["a".into()]).unwrap();
        let folds = stratified_folds(&ds, 3, 7).unwrap();
        assert_eq!(folds.len(), 2);
        for fold in &folds {
            let anomalies = fold.test.iter().filter(|&&id| ds.is_anomaly(id)).count();
            assert_eq!(anomalies, 1);
        }
    }

    #[test]
    fn folds_deterministic_and_partition() {
        let points = Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64);
        let labels: Vec<bool> = (0..20).map(|i| i % 4 == 0).collect();
        let ds = LabeledDataset::from_parts(points, labels, vec!["a".into(), "b".into()]).unwrap();
        let f1 = stratified_folds(&ds, 3, 42).unwrap();
        let f2 = stratified_folds(&ds, 3, 42).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert_eq!(a.test, b.test);
            assert_eq!(a.train, b.train);
        }
        let mut all: Vec<usize> = f1.iter().flat_map(|f| f.test.iter().cloned()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        for (i, a) in f1.iter().enumerate() {
            for b in f1.iter().skip(i + 1) {
                assert!(a.test.iter().all(|id| !b.test.contains(id)));
            }
        }
    }

    #[test]
    fn folds_k_too_large() {
        let ds = LabeledDataset::from_parts(
            array![[1.0], [2.0]],
            vec![true, false],
            vec!["a".into()],
        )
        .unwrap();
        assert!(stratified_folds(&ds, 3, 0).is_err());
    }
}
