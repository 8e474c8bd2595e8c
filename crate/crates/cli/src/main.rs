use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use packs::dataset::load_csv;
use packs::evaluate::{generate_synthetic, SynthConfig};

use packs_cli::config::PipelineConfig;
use packs_cli::detect::{render_scores_csv, run_detect};
use packs_cli::error::Result;
use packs_cli::metrics::run_metrics;
use packs_cli::pipeline::{explain, sig4, write_outputs};

#[derive(Parser)]
#[command(
    name = "packs",
    about = "Explains labeled anomalies with minimal ellipsoid pack signatures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine a packing from a labeled CSV and write packing.json, cost.csv,
    /// and report.txt.
    Explain(ExplainArgs),
    /// Score a CSV against a saved packing and write scores.csv.
    Detect(DetectArgs),
    /// Generate a synthetic dataset with planted anomaly patterns.
    Synth(SynthArgs),
    /// Summarize interpretability and detection metrics of a packing.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct ExplainArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the label column.
    #[arg(long)]
    label_column: String,
    /// Label value that marks an anomaly.
    #[arg(long, default_value = "1")]
    anomaly_value: String,
    /// Directory for the output artifacts.
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Density quantile thresholds, percent.
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    /// Penalty grid for vicinity anomalies.
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    /// Penalty grid for normal points.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Minimum anomalies per rectangle (default: seed median).
    #[arg(long)]
    mass_threshold: Option<usize>,
    /// Maximum normals per rectangle (default: seed median).
    #[arg(long)]
    purity_threshold: Option<usize>,
    /// Bits per transmitted coordinate.
    #[arg(long)]
    log2_f: Option<f64>,
    /// Vicinity expansion factor.
    #[arg(long)]
    vicinity_margin: Option<f64>,
    /// Highest lattice level to expand.
    #[arg(long)]
    level_cap: Option<usize>,
    /// Upper bound of the pack-count sweep.
    #[arg(long)]
    k_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Price pack shapes as full matrices.
    #[arg(long)]
    full_shape_cost: bool,
    /// Also write the per-level lattice to lattice.json.
    #[arg(long)]
    dump_lattice: bool,
}

#[derive(Args)]
struct DetectArgs {
    /// packing.json produced by `explain`.
    #[arg(long)]
    packing: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Optional label column; enables the label column and AUPRC output.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, default_value = "1")]
    anomaly_value: String,
    /// Output scores CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    num_points: usize,
    #[arg(long)]
    num_features: usize,
    #[arg(long)]
    num_packs: usize,
    #[arg(long)]
    max_pack_dim: usize,
    #[arg(long)]
    anomaly_fraction: f64,
    #[arg(long)]
    range_width: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output CSV (features f0..f{d-1} plus a 0/1 "label" column).
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON dump of the planted ground-truth packs.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    packing: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label_column: String,
    #[arg(long, default_value = "1")]
    anomaly_value: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain(args) => {
            let mut cfg = match &args.config {
                Some(path) => PipelineConfig::from_file(path)?,
                None => PipelineConfig::default(),
            };
            merge_flags(&mut cfg, &args);
            let dataset = load_csv(&args.input, &args.label_column, &args.anomaly_value)?;
            let outcome = explain(&dataset, &cfg)?;
            let artifacts = write_outputs(&outcome, &cfg, &args.out_dir)?;
            println!(
                "packs: {} | coverage: {} | savings: {}% | outputs in {}",
                outcome.packing.len(),
                sig4(outcome.coverage()),
                sig4(outcome.cost.savings_percent),
                args.out_dir.display()
            );
            if outcome.packing.is_empty() {
                println!("no compressive pattern found; anomalies are listed as outliers");
            }
            let _ = artifacts;
            Ok(())
        }
        Command::Detect(args) => {
            let outcome = run_detect(
                &args.packing,
                &args.input,
                args.label_column.as_deref(),
                &args.anomaly_value,
            )?;
            std::fs::write(&args.out, render_scores_csv(&outcome))?;
            let flagged = outcome.rows.iter().filter(|r| r.flag).count();
            println!("scored {} instances, {} flagged anomalous", outcome.rows.len(), flagged);
            if outcome.had_labels {
                match outcome.auprc {
                    Some(v) => println!("AUPRC: {v:.6}"),
                    None => println!("AUPRC: NA"),
                }
            }
            Ok(())
        }
        Command::Synth(args) => {
            let (dataset, planted) = generate_synthetic(&SynthConfig {
                num_points: args.num_points,
                num_features: args.num_features,
                num_packs: args.num_packs,
                max_pack_dim: args.max_pack_dim,
                anomaly_fraction: args.anomaly_fraction,
                range_width: args.range_width,
                seed: args.seed,
            })?;
            let mut text = String::new();
            text.push_str(&dataset.feature_names().join(","));
            text.push_str(",label\n");
            for id in 0..dataset.num_points() {
                let row = dataset.point(id);
                for v in row.iter() {
                    text.push_str(&format!("{v},"));
                }
                text.push_str(if dataset.is_anomaly(id) { "1\n" } else { "0\n" });
            }
            std::fs::write(&args.out, text)?;
            if let Some(truth) = &args.truth {
                let mut json = serde_json::to_string_pretty(&planted)?;
                json.push('\n');
                std::fs::write(truth, json)?;
            }
            println!(
                "wrote {} points ({} anomalies, {} planted patterns) to {}",
                dataset.num_points(),
                dataset.num_anomalies(),
                planted.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Metrics(args) => {
            let report = run_metrics(
                &args.packing,
                &args.input,
                &args.label_column,
                &args.anomaly_value,
            )?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            match &args.out {
                Some(path) => std::fs::write(path, json)?,
                None => print!("{json}"),
            }
            Ok(())
        }
    }
}

fn merge_flags(cfg: &mut PipelineConfig, args: &ExplainArgs) {
    if let Some(v) = &args.quantiles {
        cfg.quantiles = v.clone();
    }
    if let Some(v) = &args.alpha_grid {
        cfg.alpha_grid = v.clone();
    }
    if let Some(v) = &args.lambda_grid {
        cfg.lambda_grid = v.clone();
    }
    if args.mass_threshold.is_some() {
        cfg.mass_threshold = args.mass_threshold;
    }
    if args.purity_threshold.is_some() {
        cfg.purity_threshold = args.purity_threshold;
    }
    if let Some(v) = args.log2_f {
        cfg.log2_f = v;
    }
    if let Some(v) = args.vicinity_margin {
        cfg.vicinity_margin = v;
    }
    if let Some(v) = args.level_cap {
        cfg.level_cap = v;
    }
    if let Some(v) = args.k_cap {
        cfg.k_cap = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    if args.full_shape_cost {
        cfg.full_shape_cost = true;
    }
    if args.dump_lattice {
        cfg.dump_lattice = true;
    }
}
