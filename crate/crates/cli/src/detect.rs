//! Applies a saved packing to new data: per-instance scores, anomaly flags,
//! and ranking quality when labels are available.

use std::path::Path;

use packs::evaluate::{auprc, score_instance};

use crate::error::{CliError, Result};
use crate::packing_file::PackingFile;

pub struct ScoreRow {
    pub id: usize,
    pub score: f64,
    pub flag: bool,
    pub label: Option<bool>,
}

pub struct DetectOutcome {
    pub rows: Vec<ScoreRow>,
    /// `None` when the packing is empty or labels are absent/one-sided.
    pub auprc: Option<f64>,
    pub had_labels: bool,
}

/// Reads a CSV whose label column is optional; all other columns must be
/// numeric. Returns (feature names, rows, labels).
fn read_matrix_csv(
    path: &Path,
    label_column: Option<&str>,
    anomaly_value: &str,
) -> Result<(Vec<String>, Vec<Vec<f64>>, Option<Vec<bool>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::input(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::input(format!("label column {name:?} not found")))?,
        ),
        None => None,
    };
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(format!("row {}: {e}", row_idx + 1)))?;
        let mut row = Vec::with_capacity(names.len());
        for (col_idx, field) in record.iter().enumerate() {
            if Some(col_idx) == label_idx {
                labels.as_mut().unwrap().push(field == anomaly_value);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CliError::input(format!(
                        "non-numeric value {:?} at row {}, column {}",
                        field,
                        row_idx + 1,
                        headers[col_idx]
                    ))
                })?;
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    Ok((names, rows, labels))
}

/// Scores every row of the CSV against the packing. Raw values are mapped
/// into the packing's normalized space through its recorded feature scales;
/// an instance is flagged anomalous when its best boundary value reaches 0.
pub fn run_detect(
    packing_path: &Path,
    input_path: &Path,
    label_column: Option<&str>,
    anomaly_value: &str,
) -> Result<DetectOutcome> {
    let file = PackingFile::load(packing_path)?;
    let packs = file.to_packs()?;
    let (names, rows, labels) = read_matrix_csv(input_path, label_column, anomaly_value)?;

    // Every training feature must be present by name.
    let column_of: Vec<usize> = file
        .normalization
        .iter()
        .map(|f| {
            names.iter().position(|n| n == &f.name).ok_or_else(|| {
                CliError::schema(format!(
                    "feature {:?} required by the packing is missing from {}",
                    f.name,
                    input_path.display()
                ))
            })
        })
        .collect::<Result<_>>()?;

    let score_rows: Vec<ScoreRow> = rows
        .iter()
        .enumerate()
        .map(|(id, row)| {
            let x: Vec<f64> = file
                .normalization
                .iter()
                .zip(&column_of)
                .map(|(f, &col)| {
                    let raw = row[col];
                    if f.max > f.min {
                        (raw - f.min) / (f.max - f.min)
                    } else {
                        0.0
                    }
                })
                .collect();
            let score = score_instance(&packs, &x);
            ScoreRow {
                id,
                score,
                flag: score >= 0.0,
                label: labels.as_ref().map(|l| l[id]),
            }
        })
        .collect();

    let area = match (&labels, packs.is_empty()) {
        (Some(labels), false) if labels.iter().any(|&l| l) => {
            let scores: Vec<f64> = score_rows.iter().map(|r| r.score).collect();
            Some(auprc(&scores, labels)?)
        }
        _ => None,
    };
    Ok(DetectOutcome {
        rows: score_rows,
        auprc: area,
        had_labels: labels.is_some(),
    })
}

/// Serializes score rows as `id,score,flag[,label]`.
pub fn render_scores_csv(outcome: &DetectOutcome) -> String {
    let mut text = String::from(if outcome.had_labels {
        "id,score,flag,label\n"
    } else {
        "id,score,flag\n"
    });
    for row in &outcome.rows {
        let flag = if row.flag { 1 } else { 0 };
        match row.label {
            Some(label) => text.push_str(&format!(
                "{},{},{},{}\n",
                row.id,
                row.score,
                flag,
                if label { 1 } else { 0 }
            )),
            None => text.push_str(&format!("{},{},{}\n", row.id, row.score, flag)),
        }
    }
    text
}
