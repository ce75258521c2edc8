//! Batch CLI for the explainable-classification experiments.
//!
//! Three subcommands: `synth` writes a labeled dataset as CSV, `run`
//! executes a sweep of cross-validated experiments into a tidy results CSV,
//! and `report` renders SVG plots plus a summary table from such a file.
//! Exit codes: 0 on success, 2 on configuration errors, 3 on data errors.

mod config;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, DatasetKind, ExplanationSetting, SweepPoint};
use report::ResultRow;
use tedc::classifiers::Algorithm;
use tedc::dataset::{load_fico_csv, preprocess_fico, FeatureTable, LabeledDataset};
use tedc::error::{Error, Result};
use tedc::eval::{run_experiment_with_reports, ExperimentResult, ExperimentSpec, SearchSpace};
use tedc::fico;
use tedc::noise::{synthesize_with_noise, NoiseConfig};
use tedc::retention;
use tedc::rules::LabelingScheme;
use tedc::seed;
use tedc::ted::ImputationRecord;

#[derive(Parser)]
#[command(name = "tedc", version, about = "Explainable classification on joint (decision, explanation) labels: dataset synthesis, experiment sweeps, reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Experiment manifest (JSON with a `sweep` array).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the dataset of every sweep point.
    #[arg(long)]
    dataset: Option<String>,
    /// Override the algorithm of every sweep point.
    #[arg(long)]
    algo: Option<String>,
    /// Override the seed list of every sweep point with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Licensed credit CSV; enables the `fico-file` dataset.
    #[arg(long)]
    fico_file: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize labeled datasets and write them as CSV.
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        /// Rule-config JSON overriding the built-in labeling scheme.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Run the sweep and write fold-level metrics as a tidy CSV.
    Run {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Render SVG plots and print a summary table from a results CSV.
    Report {
        /// Results CSV produced by `run`.
        results: PathBuf,
        /// Output directory for the plots.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth { common, rules } => cmd_synth(&common, rules.as_deref()),
        Command::Run { common } => cmd_run(&common),
        Command::Report { results, out } => cmd_report(&results, &out),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(if e.is_config() { 2 } else { 3 });
    }
}

/// Resolve the sweep: manifest file or a single point built from flags.
fn resolve_sweep(common: &CommonOpts) -> Result<Vec<SweepPoint>> {
    let mut sweep = match &common.config {
        Some(path) => ConfigFile::load(path)?.sweep,
        None => {
            let dataset = parse_dataset(common.dataset.as_deref().unwrap_or("fico"))?;
            vec![SweepPoint {
                name: "adhoc".into(),
                dataset,
                algorithm: Algorithm::RandomForest,
                explanations: default_explanations_for(dataset),
                noise: Default::default(),
                e_fraction: 1.0,
                k: 5,
                seeds: vec![1],
                n_rows: 10_000,
                search_iterations: None,
                include_oracle: false,
                impute_append_y: false,
            }]
        }
    };
    for point in &mut sweep {
        if let Some(ds) = &common.dataset {
            point.dataset = parse_dataset(ds)?;
            if matches!(point.dataset, DatasetKind::Retention)
                && point.explanations.retention_level().is_err()
            {
                point.explanations = default_explanations_for(point.dataset);
            }
            if !matches!(point.dataset, DatasetKind::Retention)
                && point.explanations.fico_config().is_err()
            {
                point.explanations = default_explanations_for(point.dataset);
            }
        }
        if let Some(algo) = &common.algo {
            point.algorithm = parse_algorithm(algo)?;
        }
        if let Some(seed) = common.seed {
            point.seeds = vec![seed];
        }
        point.validate()?;
    }
    if sweep.is_empty() {
        return Err(Error::Config("sweep array is empty".into()));
    }
    Ok(sweep)
}

fn default_explanations_for(dataset: DatasetKind) -> ExplanationSetting {
    match dataset {
        DatasetKind::Retention => ExplanationSetting::Retention { level: 1 },
        _ => ExplanationSetting::Fico { m: 1, include_inquiry: false },
    }
}

fn parse_dataset(s: &str) -> Result<DatasetKind> {
    match s {
        "fico" => Ok(DatasetKind::Fico),
        "retention" => Ok(DatasetKind::Retention),
        "fico-file" => Ok(DatasetKind::FicoFile),
        other => Err(Error::Config(format!(
            "unknown dataset `{other}`; expected fico, retention, or fico-file"
        ))),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm> {
    match s {
        "random_forest" | "rf" => Ok(Algorithm::RandomForest),
        "decision_tree" | "tree" => Ok(Algorithm::DecisionTree),
        "logistic_regression" | "lr" => Ok(Algorithm::LogisticRegression),
        other => Err(Error::Config(format!(
            "unknown algorithm `{other}`; expected random_forest, decision_tree, or logistic_regression"
        ))),
    }
}

/// A synthesized dataset plus what the oracle needs (the labeling scheme and
/// the rule-feature table, row-aligned with the dataset).
struct Prepared {
    data: LabeledDataset,
    scheme: LabelingScheme,
    rule_table: FeatureTable,
    n_explanations: usize,
}

fn prepare_dataset(point: &SweepPoint, seed: u64, fico_file: Option<&Path>) -> Result<Prepared> {
    let noise = NoiseConfig::new(point.noise.tau, point.noise.epsilon, seed::derive(seed, "noise", 0));
    match point.dataset {
        DatasetKind::Fico => {
            let cfg = point.explanations.fico_config()?;
            let scheme = fico::expanded_scheme(&cfg)?.scheme;
            let table = tedc::dataset::sample_fico_like(point.n_rows, seed)?;
            let data = synthesize_with_noise(&scheme, &table, &noise)?;
            let n = scheme.explanations.len();
            Ok(Prepared { data, rule_table: table, scheme, n_explanations: n })
        }
        DatasetKind::Retention => {
            let level = point.explanations.retention_level()?;
            let scheme = retention::scheme_at(level);
            let table = retention::sample_retention(point.n_rows, seed)?;
            let derived = retention::derive_features(&table)?;
            let (y, e) = tedc::noise::synthesize_labels(&scheme, &derived, &noise)?;
            let data = LabeledDataset::new(
                table,
                y,
                e.into_iter().map(Some).collect(),
                scheme.explanations.clone(),
            )?;
            let n = scheme.explanations.len();
            Ok(Prepared { data, rule_table: derived, scheme, n_explanations: n })
        }
        DatasetKind::FicoFile => {
            let path = fico_file.ok_or_else(|| {
                Error::Config("dataset `fico-file` needs --fico-file <path>".into())
            })?;
            let (raw, _outcomes) = load_fico_csv(path)?;
            let (table, _report) = preprocess_fico(&raw)?;
            let cfg = point.explanations.fico_config()?;
            let scheme = fico::expanded_scheme(&cfg)?.scheme;
            let data = synthesize_with_noise(&scheme, &table, &noise)?;
            let n = scheme.explanations.len();
            Ok(Prepared { data, rule_table: table, scheme, n_explanations: n })
        }
    }
}

fn cmd_synth(common: &CommonOpts, rules: Option<&Path>) -> Result<()> {
    let sweep = resolve_sweep(common)?;
    std::fs::create_dir_all(&common.out)?;
    let custom_scheme = rules
        .map(|p| -> Result<LabelingScheme> {
            LabelingScheme::from_json_str(&std::fs::read_to_string(p)?)
        })
        .transpose()?;

    for point in &sweep {
        let seed = point.seeds[0];
        let path = common.out.join(format!("{}.csv", point.name));
        let noise =
            NoiseConfig::new(point.noise.tau, point.noise.epsilon, seed::derive(seed, "noise", 0));
        match (&custom_scheme, point.dataset) {
            (Some(scheme), _) => {
                // Custom rules run against whatever table the dataset kind
                // provides (raw credit columns, derived retention columns).
                let table = match point.dataset {
                    DatasetKind::Fico => tedc::dataset::sample_fico_like(point.n_rows, seed)?,
                    DatasetKind::Retention => {
                        retention::derive_features(&retention::sample_retention(point.n_rows, seed)?)?
                    }
                    DatasetKind::FicoFile => {
                        let prepared = prepare_dataset(point, seed, common.fico_file.as_deref())?;
                        prepared.rule_table
                    }
                };
                let data = synthesize_with_noise(scheme, &table, &noise)?;
                data.write_csv(&path)?;
            }
            (None, DatasetKind::Retention) => {
                let table = retention::sample_retention(point.n_rows, seed)?;
                retention::write_retention_csv(&table, &noise, &path)?;
            }
            (None, _) => {
                let prepared = prepare_dataset(point, seed, common.fico_file.as_deref())?;
                prepared.data.write_csv(&path)?;
            }
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn experiment_spec(point: &SweepPoint, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        algorithm: point.algorithm,
        k: point.k,
        seed,
        e_fraction: point.e_fraction,
        search_iterations: point
            .search_iterations
            .unwrap_or_else(|| SearchSpace::for_algorithm(point.algorithm).default_iterations()),
        impute_append_y: point.impute_append_y,
    }
}

fn result_rows(
    point: &SweepPoint,
    seed: u64,
    n_explanations: usize,
    result: &ExperimentResult,
) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for f in &result.folds {
        let mut push = |metric: &str, value: f64| {
            rows.push(ResultRow {
                name: point.name.clone(),
                dataset: point.dataset.to_string(),
                algorithm: point.algorithm.to_string(),
                explanation_setting: point.explanations.label(),
                n_explanations,
                tau: point.noise.tau,
                epsilon: point.noise.epsilon,
                e_fraction: point.e_fraction,
                seed,
                fold: f.fold,
                metric: metric.into(),
                value,
            });
        };
        push("e_accuracy", f.e_accuracy);
        push("y_accuracy", f.y_accuracy);
        push("y_only_accuracy", f.y_only_accuracy);
        push("y_delta", f.y_delta);
        push("e_macro_f1", f.e_macro_f1);
        push("y_macro_f1", f.y_macro_f1);
        if let (Some(oe), Some(oy)) = (f.oracle_e_accuracy, f.oracle_y_accuracy) {
            push("oracle_e_accuracy", oe);
            push("oracle_y_accuracy", oy);
        }
    }
    rows
}

fn write_fold_imputation_csv(
    reports: &[Vec<ImputationRecord>],
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "row", "y", "imputed_e", "confidence"])?;
    for (fold, records) in reports.iter().enumerate() {
        for r in records {
            w.write_record(&[
                fold.to_string(),
                r.row.to_string(),
                if r.y { "1".into() } else { "0".to_string() },
                r.imputed_e.to_string(),
                format!("{:.6}", r.confidence),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(common: &CommonOpts) -> Result<()> {
    let sweep = resolve_sweep(common)?;
    std::fs::create_dir_all(&common.out)?;

    // Flatten to (point, seed) tasks; run in a worker pool but emit rows in
    // config order.
    let tasks: Vec<(usize, u64)> = sweep
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let fico_file = common.fico_file.clone();
    let outputs: Vec<Result<(Vec<ResultRow>, Vec<Vec<ImputationRecord>>)>> =
        tedc::exec::map_indexed(tasks.len(), |t| {
            let (pi, seed) = tasks[t];
            let point = &sweep[pi];
            let prepared = prepare_dataset(point, seed, fico_file.as_deref())?;
            let spec = experiment_spec(point, seed);
            let oracle = point
                .include_oracle
                .then_some((&prepared.scheme, &prepared.rule_table));
            let (result, reports) = run_experiment_with_reports(&prepared.data, oracle, &spec)?;
            Ok((result_rows(point, seed, prepared.n_explanations, &result), reports))
        });

    let mut all_rows = Vec::new();
    for (t, out) in outputs.into_iter().enumerate() {
        let (rows, reports) = out?;
        let (pi, seed) = tasks[t];
        if reports.iter().any(|r| !r.is_empty()) {
            let path = common
                .out
                .join(format!("imputation_{}_seed{}.csv", sweep[pi].name, seed));
            write_fold_imputation_csv(&reports, &path)?;
        }
        all_rows.extend(rows);
    }

    let results_path = common.out.join("results.csv");
    report::write_results_csv(&all_rows, &results_path)?;
    println!("wrote {}", results_path.display());
    print!("{}", report::summary_table(&all_rows));
    Ok(())
}

fn cmd_report(results: &Path, out: &Path) -> Result<()> {
    let rows = report::read_results_csv(results)?;
    std::fs::create_dir_all(out)?;
    let written = report::write_plots(&rows, out)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    print!("{}", report::summary_table(&rows));
    Ok(())
}
