//! End-to-end explanation pipeline: seeding, lattice search, refinement,
//! and minimum-description-length selection, plus the output artifacts.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use packs::dataset::LabeledDataset;
use packs::density::seed_rectangles;
use packs::lattice::{default_thresholds, subclus, SubclusOutcome, SubclusParams};
use packs::mdl::{description_length, EncodingParams, PackingCostReport};
use packs::refine::{feature_rules, refine_rectangle_with_stats, Pack, RefineStats, Signature};
use packs::select::{select_packing, SelectionResult};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::packing_file::PackingFile;

/// Everything the pipeline produced for one dataset.
pub struct ExplainOutcome {
    /// The normalized dataset the packing refers to.
    pub dataset: LabeledDataset,
    pub thresholds: (usize, usize),
    pub lattice: SubclusOutcome,
    pub pool: Vec<Pack>,
    pub refine_stats: RefineStats,
    pub encoding: EncodingParams,
    pub selection: SelectionResult,
    pub packing: Vec<Pack>,
    pub cost: PackingCostReport,
}

impl ExplainOutcome {
    pub fn signatures(&self) -> Vec<Signature> {
        self.packing
            .iter()
            .map(|p| feature_rules(p, &self.dataset))
            .collect()
    }

    /// Fraction of anomalies covered by the selected packing.
    pub fn coverage(&self) -> f64 {
        1.0 - self.cost.outlier_ids.len() as f64 / self.dataset.num_anomalies() as f64
    }
}

/// Runs the full pipeline. The dataset may be raw; it is normalized here.
pub fn explain(dataset: &LabeledDataset, config: &PipelineConfig) -> Result<ExplainOutcome> {
    config.validate()?;
    match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::input(format!("worker pool: {e}")))?
            .install(|| explain_inner(dataset, config)),
        None => explain_inner(dataset, config),
    }
}

fn explain_inner(dataset: &LabeledDataset, config: &PipelineConfig) -> Result<ExplainOutcome> {
    let t0 = Instant::now();
    let dataset = dataset.normalize();
    let seeds = seed_rectangles(&dataset, &config.quantiles);
    log::info!(
        "seeded {} one-dimensional rectangles in {:.2?}",
        seeds.len(),
        t0.elapsed()
    );

    let thresholds = if seeds.is_empty() {
        (2, 0)
    } else {
        let (ms, mu) = default_thresholds(&seeds)?;
        (
            config.mass_threshold.unwrap_or(ms),
            config.purity_threshold.unwrap_or(mu),
        )
    };
    let t1 = Instant::now();
    let lattice = subclus(
        &dataset,
        &seeds,
        &SubclusParams {
            mass_threshold: thresholds.0,
            purity_threshold: thresholds.1,
            level_cap: config.level_cap,
        },
    );
    log::info!(
        "lattice search kept {} rectangles (ms={}, mu={}) in {:.2?}",
        lattice.rectangles.len(),
        thresholds.0,
        thresholds.1,
        t1.elapsed()
    );

    let t2 = Instant::now();
    let refined: Vec<(Vec<Pack>, RefineStats)> = lattice
        .rectangles
        .par_iter()
        .enumerate()
        .map(|(i, rect)| {
            refine_rectangle_with_stats(
                i,
                rect,
                &dataset,
                &config.alpha_grid,
                &config.lambda_grid,
                config.vicinity_margin,
                thresholds.1,
            )
        })
        .collect();
    let mut pool = Vec::new();
    let mut refine_stats = RefineStats::default();
    for (packs, stats) in refined {
        pool.extend(packs);
        refine_stats.cells += stats.cells;
        refine_stats.solver_failures += stats.solver_failures;
        refine_stats.empty_ellipsoids += stats.empty_ellipsoids;
        refine_stats.impure += stats.impure;
    }
    log::info!(
        "refinement produced {} candidate packs from {} cells ({} solver failures, {} empty, {} impure) in {:.2?}",
        pool.len(),
        refine_stats.cells,
        refine_stats.solver_failures,
        refine_stats.empty_ellipsoids,
        refine_stats.impure,
        t2.elapsed()
    );
    if pool.is_empty() && refine_stats.solver_failures > 0 {
        return Err(CliError::Solver(format!(
            "no candidate packs: {} of {} grid cells failed in the solver",
            refine_stats.solver_failures, refine_stats.cells
        )));
    }

    let encoding = EncodingParams::new(
        dataset.num_features(),
        dataset.num_points(),
        dataset.num_anomalies(),
        config.log2_f,
    )
    .with_full_shape_cost(config.full_shape_cost)
    .with_pool(&pool);

    let t3 = Instant::now();
    let selection = select_packing(&pool, &encoding, config.seed, config.k_cap);
    let packing: Vec<Pack> = selection
        .packing_indices
        .iter()
        .map(|&i| pool[i].clone())
        .collect();
    let cost = description_length(&packing, &dataset, &encoding);
    log::info!(
        "selected {} packs (savings {:.2}%) in {:.2?}",
        packing.len(),
        cost.savings_percent,
        t3.elapsed()
    );

    Ok(ExplainOutcome {
        dataset,
        thresholds,
        lattice,
        pool,
        refine_stats,
        encoding,
        selection,
        packing,
        cost,
    })
}

/// Formats a value with four significant digits.
pub fn sig4(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.4}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Renders the human-readable report: one block per pack, rules in raw
/// units, sorted by mass descending.
pub fn render_report(outcome: &ExplainOutcome, config: &PipelineConfig) -> String {
    let ds = &outcome.dataset;
    let mut text = String::new();
    text.push_str(&format!(
        "packing report (seed {})\ndataset: {} points, {} features, {} anomalies\n",
        config.seed,
        ds.num_points(),
        ds.num_features(),
        ds.num_anomalies()
    ));
    text.push_str(&format!(
        "packs: {} selected from {} candidates | total {} bits | naive {} bits | savings {}%\n",
        outcome.packing.len(),
        outcome.pool.len(),
        sig4(outcome.cost.total_bits),
        sig4(outcome.cost.naive_bits),
        sig4(outcome.cost.savings_percent),
    ));
    if outcome.packing.is_empty() {
        text.push_str(&format!(
            "\nno compressive pattern found; all {} anomalies remain outliers\n",
            outcome.cost.outlier_ids.len()
        ));
        return text;
    }
    text.push_str(&format!(
        "outliers: {} anomalies left unpacked\n",
        outcome.cost.outlier_ids.len()
    ));

    let mut order: Vec<usize> = (0..outcome.packing.len()).collect();
    order.sort_by(|&a, &b| {
        outcome.packing[b]
            .mass()
            .cmp(&outcome.packing[a].mass())
            .then(a.cmp(&b))
    });
    for (rank, &idx) in order.iter().enumerate() {
        let pack = &outcome.packing[idx];
        let sig = feature_rules(pack, ds);
        text.push_str(&format!(
            "\npack {}: mass {}, impurity {} ({}-d subspace)\n",
            rank + 1,
            pack.mass(),
            pack.impurity(),
            pack.subspace_dim()
        ));
        text.push_str("  feature              center     interval [0,1]         interval [raw units]\n");
        for rule in &sig.rules {
            text.push_str(&format!(
                "  {:<20} {:<10} ({}, {})      ({}, {})\n",
                rule.feature,
                sig4(rule.center),
                sig4(rule.interval.lb),
                sig4(rule.interval.ub),
                sig4(rule.raw_interval.0),
                sig4(rule.raw_interval.1),
            ));
        }
    }
    text
}

/// Paths of the artifacts one explain run writes.
pub struct ExplainArtifacts {
    pub packing_json: std::path::PathBuf,
    pub cost_csv: std::path::PathBuf,
    pub report_txt: std::path::PathBuf,
    pub lattice_json: Option<std::path::PathBuf>,
}

/// Writes packing.json, cost.csv, report.txt (and optionally lattice.json)
/// into the output directory.
pub fn write_outputs(
    outcome: &ExplainOutcome,
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<ExplainArtifacts> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let file = PackingFile::build(
        &outcome.dataset,
        &outcome.packing,
        outcome.cost.outlier_ids.clone(),
        outcome.cost.total_bits,
        outcome.cost.naive_bits,
        outcome.cost.savings_percent,
        config.log2_f,
        config.seed,
    );
    let packing_json = out_dir.join("packing.json");
    file.save(&packing_json)?;

    let cost_csv = out_dir.join("cost.csv");
    let mut csv_text = String::from("K,bits\n");
    for (k, bits) in &outcome.selection.per_k_trace {
        csv_text.push_str(&format!("{k},{bits}\n"));
    }
    std::fs::write(&cost_csv, csv_text)?;

    let report_txt = out_dir.join("report.txt");
    std::fs::write(&report_txt, render_report(outcome, config))?;

    let lattice_json = if config.dump_lattice {
        let path = out_dir.join("lattice.json");
        let mut text = serde_json::to_string_pretty(&outcome.lattice.levels)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Some(path)
    } else {
        None
    };

    Ok(ExplainArtifacts {
        packing_json,
        cost_csv,
        report_txt,
        lattice_json,
    })
}
