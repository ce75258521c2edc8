//! Experiment harness: stratified k-fold cross-validation, random
//! hyperparameter search over the documented spaces with an internal
//! five-fold CV, the noise-free rule oracle, and the full experiment runner
//! producing per-fold metrics with 95% confidence intervals.
//!
//! Per outer fold the runner searches hyperparameters on the training
//! split, fits the Cartesian model and an independently searched
//! decision-only model, and scores both on the held-out fold. With a
//! partial explanation fraction it first blanks explanations uniformly at
//! random from the training rows only (test rows keep theirs for scoring)
//! and imputes them with the searched spec before fitting. Medians for null
//! imputation always come from the training split and are replayed on the
//! test split.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::classifiers::{
    AlgoParams, Algorithm, BaseModel, ClassifierSpec, ForestParams, LogRegParams, Penalty,
    TreeParams,
};
use crate::dataset::{impute_nulls_median, FeatureTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::rules::LabelingScheme;
use crate::seed;
use crate::ted::{self, ImputationRecord};

use rand::Rng;

/// Tuning-phase budget for the logistic-regression fits inside the search
/// loop; final fits always use the full convergence contract.
const TUNING_MAX_ITERATIONS: usize = 1_000;
const TUNING_TOL: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Stratified folds
// ---------------------------------------------------------------------------

/// A class too small to appear in every fold; its members were spread
/// round-robin instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmallClassWarning {
    pub class: usize,
    pub members: usize,
}

/// Assignment of rows to folds, stratified by class.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub warnings: Vec<SmallClassWarning>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] != fold).collect()
    }
}

/// Stratified fold assignment: each class's members are shuffled and dealt
/// round-robin, with a rotating starting fold so small classes do not pile
/// into fold 0. Classes with at least `k` members appear in every fold;
/// smaller classes produce a warning record.
pub fn make_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::Data(format!(
            "{} rows cannot fill {k} folds",
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (row, &c) in labels.iter().enumerate() {
        members[c].push(row);
    }

    let mut assignments = vec![0usize; labels.len()];
    let mut warnings = Vec::new();
    let mut start = 0usize;
    for (class, mut rows) in members.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k {
            warnings.push(SmallClassWarning { class, members: rows.len() });
        }
        let mut rng = seed::rng(seed, "fold_class", class as u64);
        // Fisher-Yates shuffle.
        for i in (1..rows.len()).rev() {
            let j = rng.gen_range(0..=i);
            rows.swap(i, j);
        }
        for (i, row) in rows.iter().enumerate() {
            assignments[*row] = (start + i) % k;
        }
        start = (start + rows.len()) % k;
    }
    Ok(FoldPlan { k, assignments, warnings })
}

// ---------------------------------------------------------------------------
// Random hyperparameter search
// ---------------------------------------------------------------------------

/// Sampling space for one algorithm's hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchSpace {
    /// min_samples_leaf uniform over 1..=50.
    DecisionTree,
    /// min_samples_leaf uniform over 1..=50; 100 trees.
    RandomForest,
    /// Penalty uniform over {l1, l2}; C log-uniform over [1e-3, 10].
    LogisticRegression,
    /// Degenerate single-point space.
    Fixed(AlgoParams),
}

impl SearchSpace {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::DecisionTree => SearchSpace::DecisionTree,
            Algorithm::RandomForest => SearchSpace::RandomForest,
            Algorithm::LogisticRegression => SearchSpace::LogisticRegression,
        }
    }

    /// Search budget used when the caller does not override it.
    pub fn default_iterations(&self) -> usize {
        20
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> AlgoParams {
        match self {
            SearchSpace::DecisionTree => AlgoParams::DecisionTree(TreeParams {
                min_samples_leaf: rng.gen_range(1..=50),
            }),
            SearchSpace::RandomForest => AlgoParams::RandomForest(ForestParams {
                min_samples_leaf: rng.gen_range(1..=50),
                ..ForestParams::default()
            }),
            SearchSpace::LogisticRegression => {
                let penalty = if rng.gen::<bool>() { Penalty::L1 } else { Penalty::L2 };
                let log_c = rng.gen_range(-3.0..=1.0f64);
                AlgoParams::LogisticRegression(LogRegParams::new(penalty, 10f64.powf(log_c)))
            }
            SearchSpace::Fixed(params) => *params,
        }
    }
}

/// Reduced-budget twin of a spec for tuning-phase fits.
fn tuning_spec(spec: &ClassifierSpec) -> ClassifierSpec {
    let mut out = *spec;
    if let AlgoParams::LogisticRegression(p) = out.params {
        out.params = AlgoParams::LogisticRegression(
            p.with_tuning_budget(TUNING_MAX_ITERATIONS, TUNING_TOL),
        );
    }
    out
}

/// Restore the full fitting budget on a searched spec.
fn final_spec(spec: &ClassifierSpec) -> ClassifierSpec {
    let mut out = *spec;
    if let AlgoParams::LogisticRegression(p) = out.params {
        out.params = AlgoParams::LogisticRegression(p.with_full_budget());
    }
    out
}

/// Uniform random search over `space`: every candidate is scored by mean
/// accuracy over an internal five-fold CV on `(x, labels)` and the best one
/// wins, ties going to the first candidate drawn.
pub fn search_hyperparameters(
    space: &SearchSpace,
    x: &FeatureTable,
    labels: &[usize],
    n_classes: usize,
    iterations: usize,
    seed: u64,
) -> Result<ClassifierSpec> {
    if iterations == 0 {
        return Err(Error::Config("hyperparameter search needs at least 1 iteration".into()));
    }
    let inner = make_folds(labels, 5, seed::derive(seed, "inner_folds", 0))?;
    let mut rng = seed::rng(seed, "candidates", 0);
    let candidates: Vec<ClassifierSpec> = (0..iterations)
        .map(|i| ClassifierSpec {
            params: space.sample(&mut rng),
            seed: seed::derive(seed, "candidate_seed", i as u64),
        })
        .collect();

    let scores: Vec<Result<f64>> = exec::map_indexed(candidates.len(), |i| {
        let spec = tuning_spec(&candidates[i]);
        let mut folds_acc = Vec::with_capacity(inner.k);
        for fold in 0..inner.k {
            let train = inner.train_rows(fold);
            let test = inner.test_rows(fold);
            let model = crate::classifiers::fit(
                &spec,
                &x.select_rows(&train),
                &train.iter().map(|&r| labels[r]).collect::<Vec<_>>(),
                n_classes,
            )?;
            let preds = model.predict(&x.select_rows(&test))?;
            let truth: Vec<usize> = test.iter().map(|&r| labels[r]).collect();
            folds_acc.push(accuracy(&preds, &truth));
        }
        Ok(folds_acc.iter().sum::<f64>() / folds_acc.len() as f64)
    });

    let mut best: Option<(usize, f64)> = None;
    for (i, score) in scores.into_iter().enumerate() {
        let score = score?;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    Ok(final_spec(&candidates[best.expect("at least one candidate").0]))
}

// ---------------------------------------------------------------------------
// Oracle and metrics
// ---------------------------------------------------------------------------

/// Apply the noise-free rules directly: the label generator as a predictor.
/// Bounds what any learner can reach under label noise.
pub fn oracle_predict(scheme: &LabelingScheme, rule_table: &FeatureTable) -> Result<Vec<(bool, usize)>> {
    let bound = scheme.bind(rule_table)?;
    Ok((0..rule_table.n_rows()).map(|r| bound.apply_row(rule_table, r)).collect())
}

/// Fraction of positions where prediction equals truth.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

/// Macro-averaged F1 over the classes observed in truth or predictions.
pub fn macro_f1(pred: &[usize], truth: &[usize], n_classes: usize) -> f64 {
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut observed = 0usize;
    for c in 0..n_classes {
        let support = tp[c] + fp[c] + fn_[c];
        if support == 0 {
            continue;
        }
        observed += 1;
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    if observed == 0 {
        0.0
    } else {
        sum / observed as f64
    }
}

/// Mean and 95% confidence half-width via the t distribution with n-1
/// degrees of freedom.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

/// Settings for one cross-validated experiment on a synthesized dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub algorithm: Algorithm,
    /// Outer fold count.
    pub k: usize,
    pub seed: u64,
    /// Fraction of training rows that keep their explanation label.
    pub e_fraction: f64,
    /// Random-search budget per model.
    pub search_iterations: usize,
    /// Impute with the decision appended as an input instead of per-decision
    /// models.
    #[serde(default)]
    pub impute_append_y: bool,
}

impl ExperimentSpec {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        Self {
            algorithm,
            k: 5,
            seed,
            e_fraction: 1.0,
            search_iterations: SearchSpace::for_algorithm(algorithm).default_iterations(),
            impute_append_y: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_fraction > 0.0 && self.e_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "e_fraction must be in (0, 1], got {}",
                self.e_fraction
            )));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("fold count must be at least 2, got {}", self.k)));
        }
        if self.search_iterations == 0 {
            return Err(Error::Config("search_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Metrics of one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub e_accuracy: f64,
    pub y_accuracy: f64,
    pub y_only_accuracy: f64,
    /// Decision accuracy of the joint model minus the decision-only model.
    pub y_delta: f64,
    pub e_macro_f1: f64,
    pub y_macro_f1: f64,
    pub oracle_e_accuracy: Option<f64>,
    pub oracle_y_accuracy: Option<f64>,
    /// Explanations imputed on the training split (0 at full supervision).
    pub imputed_rows: usize,
}

/// One experiment's fold metrics with cross-fold mean and 95% CI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub folds: Vec<FoldMetrics>,
    pub summaries: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub ci_half_width: f64,
}

impl ExperimentResult {
    pub fn summary(&self, metric: &str) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.metric == metric)
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.summary(metric).map_or(f64::NAN, |s| s.mean)
    }
}

/// Everything the runner produces for one fold before aggregation.
struct FoldOutput {
    metrics: FoldMetrics,
    imputation: Vec<ImputationRecord>,
}

/// Run one cross-validated experiment. `oracle` optionally supplies the
/// labeling scheme plus the rule-feature table (row-aligned with `data`)
/// so oracle accuracies appear next to the model's.
pub fn run_experiment(
    data: &LabeledDataset,
    oracle: Option<(&LabelingScheme, &FeatureTable)>,
    spec: &ExperimentSpec,
) -> Result<ExperimentResult> {
    let (result, _) = run_experiment_with_reports(data, oracle, spec)?;
    Ok(result)
}

/// [`run_experiment`] plus the per-fold imputation reports.
pub fn run_experiment_with_reports(
    data: &LabeledDataset,
    oracle: Option<(&LabelingScheme, &FeatureTable)>,
    spec: &ExperimentSpec,
) -> Result<(ExperimentResult, Vec<Vec<ImputationRecord>>)> {
    spec.validate()?;
    if !data.fully_explained() {
        return Err(Error::Data(
            "experiments need fully explained datasets; the runner masks explanations itself".into(),
        ));
    }
    if let Some((scheme, rule_table)) = oracle {
        if rule_table.n_rows() != data.n_rows() {
            return Err(Error::Dimension { expected: data.n_rows(), got: rule_table.n_rows() });
        }
        scheme.validate()?;
    }
    let classes: Vec<usize> = data.e.iter().map(|e| e.unwrap()).collect();
    let plan = make_folds(&classes, spec.k, seed::derive(spec.seed, "outer_folds", 0))?;

    let outputs: Vec<Result<FoldOutput>> =
        exec::map_indexed(spec.k, |fold| run_fold(data, oracle, spec, &plan, &classes, fold));
    let mut folds = Vec::with_capacity(spec.k);
    let mut reports = Vec::with_capacity(spec.k);
    for out in outputs {
        let out = out?;
        folds.push(out.metrics);
        reports.push(out.imputation);
    }

    let mut summaries = Vec::new();
    let mut add = |metric: &str, values: Vec<f64>| {
        let (mean, ci) = mean_ci95(&values);
        summaries.push(MetricSummary { metric: metric.into(), mean, ci_half_width: ci });
    };
    add("e_accuracy", folds.iter().map(|f| f.e_accuracy).collect());
    add("y_accuracy", folds.iter().map(|f| f.y_accuracy).collect());
    add("y_only_accuracy", folds.iter().map(|f| f.y_only_accuracy).collect());
    add("y_delta", folds.iter().map(|f| f.y_delta).collect());
    add("e_macro_f1", folds.iter().map(|f| f.e_macro_f1).collect());
    add("y_macro_f1", folds.iter().map(|f| f.y_macro_f1).collect());
    if folds.iter().all(|f| f.oracle_e_accuracy.is_some()) {
        add("oracle_e_accuracy", folds.iter().map(|f| f.oracle_e_accuracy.unwrap()).collect());
        add("oracle_y_accuracy", folds.iter().map(|f| f.oracle_y_accuracy.unwrap()).collect());
    }
    Ok((ExperimentResult { folds, summaries }, reports))
}

fn run_fold(
    data: &LabeledDataset,
    oracle: Option<(&LabelingScheme, &FeatureTable)>,
    spec: &ExperimentSpec,
    plan: &FoldPlan,
    classes: &[usize],
    fold: usize,
) -> Result<FoldOutput> {
    let train_rows = plan.train_rows(fold);
    let test_rows = plan.test_rows(fold);

    // Null handling: medians come from the training split only.
    let (train_x, medians) = impute_nulls_median(&data.features.select_rows(&train_rows), None)?;
    let (test_x, _) = impute_nulls_median(&data.features.select_rows(&test_rows), Some(&medians))?;

    let train_y: Vec<bool> = train_rows.iter().map(|&r| data.y[r]).collect();
    let test_y: Vec<bool> = test_rows.iter().map(|&r| data.y[r]).collect();
    let test_classes: Vec<usize> = test_rows.iter().map(|&r| classes[r]).collect();

    // Blank explanations uniformly at random from the training split only.
    let mut train_e: Vec<Option<usize>> = train_rows.iter().map(|&r| data.e[r]).collect();
    let n_blank = ((1.0 - spec.e_fraction) * train_rows.len() as f64).round() as usize;
    if n_blank > 0 {
        let mut order: Vec<usize> = (0..train_rows.len()).collect();
        let mut rng = seed::rng(spec.seed, "e_mask", fold as u64);
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for &i in order.iter().take(n_blank) {
            train_e[i] = None;
        }
    }

    // Hyperparameters for the joint model (and the imputer) come from the
    // explanation-labeled part of the training split.
    let labeled: Vec<usize> = (0..train_rows.len()).filter(|&i| train_e[i].is_some()).collect();
    let labeled_classes: Vec<usize> = labeled.iter().map(|&i| classes[train_rows[i]]).collect();
    let space = SearchSpace::for_algorithm(spec.algorithm);
    let ted_spec = search_hyperparameters(
        &space,
        &train_x.select_rows(&labeled),
        &labeled_classes,
        data.space.len(),
        spec.search_iterations,
        seed::derive(spec.seed, "search_ted", fold as u64),
    )?;

    let train_ds = LabeledDataset::new(train_x.clone(), train_y.clone(), train_e, data.space.clone())?;
    let (full_ds, imputation) = if n_blank > 0 {
        ted::impute_explanations(&ted_spec, &train_ds, spec.impute_append_y)?
    } else {
        (train_ds, Vec::new())
    };
    let ted_model = ted::ted_fit(&ted_spec, &full_ds)?;

    // Independently searched decision-only model.
    let y_labels: Vec<usize> = train_y.iter().map(|&y| usize::from(y)).collect();
    let y_spec = search_hyperparameters(
        &space,
        &train_x,
        &y_labels,
        2,
        spec.search_iterations,
        seed::derive(spec.seed, "search_y", fold as u64),
    )?;
    let y_model = crate::classifiers::fit(&y_spec, &train_x, &y_labels, 2)?;

    // Score on the held-out fold.
    let pairs = ted_model.predict(&test_x)?;
    let pred_e: Vec<usize> = pairs.iter().map(|&(_, e)| e).collect();
    let pred_y: Vec<bool> = pairs.iter().map(|&(y, _)| y).collect();
    let y_only_pred: Vec<bool> = y_model.predict(&test_x)?.iter().map(|&c| c == 1).collect();

    let e_accuracy = accuracy(&pred_e, &test_classes);
    let y_accuracy = accuracy(&pred_y, &test_y);
    let y_only_accuracy = accuracy(&y_only_pred, &test_y);
    let truth_y_idx: Vec<usize> = test_y.iter().map(|&y| usize::from(y)).collect();
    let pred_y_idx: Vec<usize> = pred_y.iter().map(|&y| usize::from(y)).collect();

    let (oracle_e_accuracy, oracle_y_accuracy) = match oracle {
        None => (None, None),
        Some((scheme, rule_table)) => {
            let oracle_pairs = oracle_predict(scheme, &rule_table.select_rows(&test_rows))?;
            let oe: Vec<usize> = oracle_pairs.iter().map(|&(_, e)| e).collect();
            let oy: Vec<bool> = oracle_pairs.iter().map(|&(y, _)| y).collect();
            (Some(accuracy(&oe, &test_classes)), Some(accuracy(&oy, &test_y)))
        }
    };

    Ok(FoldOutput {
        metrics: FoldMetrics {
            fold,
            e_accuracy,
            y_accuracy,
            y_only_accuracy,
            y_delta: y_accuracy - y_only_accuracy,
            e_macro_f1: macro_f1(&pred_e, &test_classes, data.space.len()),
            y_macro_f1: macro_f1(&pred_y_idx, &truth_y_idx, 2),
            oracle_e_accuracy,
            oracle_y_accuracy,
            imputed_rows: imputation.len(),
        },
        imputation,
    })
}
