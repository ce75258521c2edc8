//! Pluggable multiclass classifiers and the three native implementations:
//! a CART-style decision tree, a bagged random forest, and multinomial
//! logistic regression.
//!
//! [`fit`]/[`predict`] drive the native algorithms through [`ClassifierSpec`];
//! anything fitted implements [`BaseModel`], the minimal surface the rest of
//! the crate consumes. External algorithms (gradient boosting, SVMs) plug in
//! by implementing [`BaseClassifier`] over the same feature tables.
//!
//! Hyperparameters are validated against the documented search ranges:
//! `min_samples_leaf` in 1..=50 and the inverse regularization `C` in
//! [1e-3, 10].

mod forest;
mod logreg;
mod tree;

pub use forest::RandomForest;
pub use logreg::{gradient_check, LogRegModel};
pub use tree::DecisionTree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{is_null, FeatureTable};
use crate::error::{Error, Result};

/// Identifier of a native algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    DecisionTree,
    RandomForest,
    LogisticRegression,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::DecisionTree => "decision_tree",
            Algorithm::RandomForest => "random_forest",
            Algorithm::LogisticRegression => "logistic_regression",
        })
    }
}

/// How many features each tree split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// floor(sqrt(d)), at least 1.
    #[default]
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => n_features,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub max_features: MaxFeatures,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, min_samples_leaf: 1, max_features: MaxFeatures::Sqrt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub penalty: Penalty,
    /// Inverse regularization strength.
    pub c: f64,
    /// Iteration cap; hyperparameter tuning may lower it, final fits keep
    /// the default.
    #[serde(default = "logreg::default_max_iterations")]
    pub max_iterations: usize,
    /// Convergence tolerance on the gradient's infinity norm.
    #[serde(default = "logreg::default_tol")]
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            max_iterations: logreg::default_max_iterations(),
            tol: logreg::default_tol(),
        }
    }
}

impl LogRegParams {
    pub fn new(penalty: Penalty, c: f64) -> Self {
        Self { penalty, c, ..Self::default() }
    }

    /// The same hyperparameters under a reduced tuning budget.
    pub fn with_tuning_budget(mut self, max_iterations: usize, tol: f64) -> Self {
        self.max_iterations = max_iterations;
        self.tol = tol;
        self
    }

    /// The same hyperparameters under the full final-fit budget.
    pub fn with_full_budget(mut self) -> Self {
        self.max_iterations = logreg::default_max_iterations();
        self.tol = logreg::default_tol();
        self
    }
}

/// Algorithm plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgoParams {
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    LogisticRegression(LogRegParams),
}

impl AlgoParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            AlgoParams::DecisionTree(_) => Algorithm::DecisionTree,
            AlgoParams::RandomForest(_) => Algorithm::RandomForest,
            AlgoParams::LogisticRegression(_) => Algorithm::LogisticRegression,
        }
    }
}

/// A fully specified training run: algorithm, hyperparameters, seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub params: AlgoParams,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn decision_tree(min_samples_leaf: usize, seed: u64) -> Self {
        Self { params: AlgoParams::DecisionTree(TreeParams { min_samples_leaf }), seed }
    }

    pub fn random_forest(min_samples_leaf: usize, seed: u64) -> Self {
        Self {
            params: AlgoParams::RandomForest(ForestParams {
                min_samples_leaf,
                ..ForestParams::default()
            }),
            seed,
        }
    }

    pub fn logistic_regression(penalty: Penalty, c: f64, seed: u64) -> Self {
        Self { params: AlgoParams::LogisticRegression(LogRegParams::new(penalty, c)), seed }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.params.algorithm()
    }

    /// Hyperparameters must sit inside the documented search ranges.
    pub fn validate(&self) -> Result<()> {
        let check_msl = |msl: usize| {
            if !(1..=50).contains(&msl) {
                Err(Error::Config(format!("min_samples_leaf must be 1..=50, got {msl}")))
            } else {
                Ok(())
            }
        };
        match self.params {
            AlgoParams::DecisionTree(p) => check_msl(p.min_samples_leaf),
            AlgoParams::RandomForest(p) => {
                check_msl(p.min_samples_leaf)?;
                if p.n_trees == 0 {
                    return Err(Error::Config("random forest needs at least 1 tree".into()));
                }
                Ok(())
            }
            AlgoParams::LogisticRegression(p) => {
                if !(1e-3..=10.0).contains(&p.c) {
                    return Err(Error::Config(format!("C must be in [1e-3, 10], got {}", p.c)));
                }
                Ok(())
            }
        }
    }
}

/// Contract every fitted model satisfies.
pub trait BaseModel: Send + Sync {
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;
    /// One class index per row; pure.
    fn predict(&self, x: &FeatureTable) -> Result<Vec<usize>>;
    /// Class index plus a confidence score (vote share or probability).
    fn predict_scored(&self, x: &FeatureTable) -> Result<Vec<(usize, f64)>>;
}

/// Contract for a trainable algorithm; external adapters implement this to
/// slot into the same pipelines as the native trio.
pub trait BaseClassifier: Send + Sync {
    fn fit_model(&self, x: &FeatureTable, labels: &[usize], n_classes: usize) -> Result<FittedModel>;
}

impl BaseClassifier for ClassifierSpec {
    fn fit_model(&self, x: &FeatureTable, labels: &[usize], n_classes: usize) -> Result<FittedModel> {
        fit(self, x, labels, n_classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum FittedInner {
    Tree(DecisionTree),
    Forest(RandomForest),
    LogReg(LogRegModel),
}

/// Opaque fitted state of a native algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    inner: FittedInner,
    spec: ClassifierSpec,
    n_classes: usize,
    n_features: usize,
}

/// On-disk model format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: FittedModel,
}

impl FittedModel {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    /// The forest's trees, when this model is a forest.
    pub fn forest(&self) -> Option<&RandomForest> {
        match &self.inner {
            FittedInner::Forest(f) => Some(f),
            _ => None,
        }
    }

    pub fn logreg(&self) -> Option<&LogRegModel> {
        match &self.inner {
            FittedInner::LogReg(m) => Some(m),
            _ => None,
        }
    }

    /// Serialize to versioned JSON so CLI runs can cache fitted models.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let parsed: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if parsed.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                parsed.format_version
            )));
        }
        Ok(parsed.model)
    }
}

impl BaseModel for FittedModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &FeatureTable) -> Result<Vec<usize>> {
        check_features(self.n_features, x)?;
        match &self.inner {
            FittedInner::Tree(t) => Ok(t.predict(x)),
            FittedInner::Forest(f) => Ok(f.predict(x)),
            FittedInner::LogReg(m) => Ok(m.predict(x)),
        }
    }

    fn predict_scored(&self, x: &FeatureTable) -> Result<Vec<(usize, f64)>> {
        check_features(self.n_features, x)?;
        match &self.inner {
            FittedInner::Tree(t) => Ok(t.predict_scored(x)),
            FittedInner::Forest(f) => Ok(f.predict_scored(x)),
            FittedInner::LogReg(m) => Ok(m.predict_scored(x)),
        }
    }
}

fn check_features(expected: usize, x: &FeatureTable) -> Result<()> {
    if x.n_cols() != expected {
        return Err(Error::Dimension { expected, got: x.n_cols() });
    }
    Ok(())
}

/// Validate training inputs shared by all algorithms.
fn check_training_inputs(x: &FeatureTable, labels: &[usize], n_classes: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::Data("cannot fit on an empty dataset".into()));
    }
    if labels.len() != x.n_rows() {
        return Err(Error::Dimension { expected: x.n_rows(), got: labels.len() });
    }
    if n_classes == 0 || n_classes > u16::MAX as usize {
        return Err(Error::Data(format!("unsupported class count {n_classes}")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Data(format!(
            "label index {bad} is outside the declared {n_classes} classes"
        )));
    }
    for (name, col) in x.names().iter().zip(x.columns()) {
        if col.iter().any(|&v| is_null(v)) {
            return Err(Error::Data(format!(
                "column `{name}` contains nulls; impute before fitting"
            )));
        }
    }
    Ok(())
}

/// Fit `spec` on the table. Deterministic: the same spec (including seed)
/// and data always produce the same model.
pub fn fit(
    spec: &ClassifierSpec,
    x: &FeatureTable,
    labels: &[usize],
    n_classes: usize,
) -> Result<FittedModel> {
    spec.validate()?;
    check_training_inputs(x, labels, n_classes)?;
    let labels16: Vec<u16> = labels.iter().map(|&l| l as u16).collect();
    let inner = match spec.params {
        AlgoParams::DecisionTree(p) => {
            FittedInner::Tree(tree::DecisionTree::fit(x, &labels16, n_classes, p, spec.seed))
        }
        AlgoParams::RandomForest(p) => {
            FittedInner::Forest(forest::RandomForest::fit(x, &labels16, n_classes, p, spec.seed))
        }
        AlgoParams::LogisticRegression(p) => {
            FittedInner::LogReg(logreg::LogRegModel::fit(x, &labels16, n_classes, p))
        }
    };
    Ok(FittedModel { inner, spec: *spec, n_classes, n_features: x.n_cols() })
}

/// Predict class indices for every row.
pub fn predict(model: &FittedModel, x: &FeatureTable) -> Result<Vec<usize>> {
    model.predict(x)
}
