//! TED-C: explainable classification driven by consumer-provided explanations.
//!
//! Training data carries an explanation label `E` alongside the usual
//! features `X` and decision `Y`. The Cartesian instantiation folds `(Y, E)`
//! into a single multiclass label, trains any base classifier on it, and
//! decodes predictions back into decision/explanation pairs.
//!
//! The crate bundles everything needed to study that pipeline end to end on
//! two semi-synthetic datasets (credit approval, employee retention):
//!
//! - [`dataset`]: feature tables, HELOC CSV ingestion and cleanup, and
//!   seeded synthetic samplers for licence-free runs.
//! - [`rules`]: discretization specs, conjunctive rules with precedence, and
//!   explanation catalogs; schemes round-trip through a JSON config.
//! - [`fico`] / [`retention`]: the two shipped labeling schemes, including
//!   the expanded credit explanation spaces and the three-level retention
//!   hierarchy.
//! - [`noise`]: logistic threshold noise and adjacent-level flips applied to
//!   discretized features before rule evaluation.
//! - [`classifiers`]: native decision tree, random forest, and multinomial
//!   logistic regression behind one pluggable contract.
//! - [`ted`]: the (Y, E) codec, joint trainer, and the per-decision
//!   imputation algorithm for partially explained training sets.
//! - [`eval`]: stratified cross-validation, random hyperparameter search,
//!   the rule oracle, and the experiment runner with fold metrics.
//!
//! Heavy loops (forest fitting, per-row label synthesis, folds, search
//! candidates) run on rayon when the default `parallel` feature is enabled
//! and fall back to plain sequential iteration without it. Results are
//! identical in both modes.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fico;
pub mod noise;
pub mod retention;
pub mod rules;
pub mod seed;
pub mod ted;

pub use dataset::{FeatureTable, LabeledDataset, LabeledExample, PreprocessReport};
pub use error::{Error, Result};
pub use rules::{DiscretizationSpec, ExplanationSpace, LabelingScheme, Predicate, Rule, RuleSet};
