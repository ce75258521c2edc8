//! Generic rule engine: threshold discretizations, conjunctive rules with
//! precedence over discretized levels, and explanation catalogs.
//!
//! A [`LabelingScheme`] bundles the three and round-trips losslessly through
//! a declarative JSON config (see `docs/rule_config.md`), so deployments can
//! edit concept-to-feature mappings without code changes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{is_null, FeatureTable};
use crate::error::{Error, Result};

/// Threshold discretization of one column into ordered levels.
///
/// With thresholds `t_1 < ... < t_{L-1}`, level `l` covers the half-open
/// interval `(t_l, t_{l+1}]` (right-closed), with implicit infinities at the
/// ends. `null_level`, when set, is the level assigned to null cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub column: String,
    pub thresholds: Vec<f64>,
    pub level_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_level: Option<usize>,
}

impl DiscretizationSpec {
    pub fn new(column: &str, thresholds: Vec<f64>, level_names: Vec<&str>) -> Self {
        Self {
            column: column.to_string(),
            thresholds,
            level_names: level_names.into_iter().map(String::from).collect(),
            null_level: None,
        }
    }

    pub fn with_null_level(mut self, level: usize) -> Self {
        self.null_level = Some(level);
        self
    }

    pub fn n_levels(&self) -> usize {
        self.level_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.level_names.len() < 2 {
            return Err(Error::Config(format!(
                "discretization of `{}` needs at least 2 levels",
                self.column
            )));
        }
        if self.thresholds.len() + 1 != self.level_names.len() {
            return Err(Error::Config(format!(
                "discretization of `{}`: {} thresholds require {} level names",
                self.column,
                self.thresholds.len(),
                self.thresholds.len() + 1
            )));
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!(
                "discretization of `{}`: thresholds must be strictly increasing",
                self.column
            )));
        }
        if let Some(nl) = self.null_level {
            if nl >= self.n_levels() {
                return Err(Error::Config(format!(
                    "discretization of `{}`: null level {nl} out of range",
                    self.column
                )));
            }
        }
        Ok(())
    }

    /// Level of a finite value: the number of thresholds strictly below `x`,
    /// i.e. `x` falls in the right-closed interval `(t_l, t_{l+1}]`.
    pub fn level_of(&self, x: f64) -> usize {
        debug_assert!(x.is_finite());
        self.thresholds.iter().take_while(|&&t| t < x).count()
    }

    /// Level of a possibly-null value; `None` when the cell is null and no
    /// null level is configured (such a cell satisfies no predicate).
    pub fn level_of_opt(&self, x: f64) -> Option<usize> {
        if is_null(x) {
            self.null_level
        } else {
            Some(self.level_of(x))
        }
    }
}

/// Comparison against a discretized level (all bounds inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelOp {
    Le(usize),
    Ge(usize),
    Eq(usize),
    Between(usize, usize),
}

impl LevelOp {
    fn matches(&self, level: usize) -> bool {
        match *self {
            LevelOp::Le(k) => level <= k,
            LevelOp::Ge(k) => level >= k,
            LevelOp::Eq(k) => level == k,
            LevelOp::Between(lo, hi) => lo <= level && level <= hi,
        }
    }

    fn max_level(&self) -> usize {
        match *self {
            LevelOp::Le(k) | LevelOp::Ge(k) | LevelOp::Eq(k) => k,
            LevelOp::Between(lo, hi) => lo.max(hi),
        }
    }
}

/// One conjunct: the named column's discretized level satisfies `op`.
/// A null level (null cell without a configured null level) satisfies no
/// predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: String,
    pub op: LevelOp,
}

impl Predicate {
    pub fn new(column: &str, op: LevelOp) -> Self {
        Self { column: column.to_string(), op }
    }
}

/// Conjunction of predicates with the labels it produces. A rule with no
/// conditions always matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Predicate>,
    pub y: bool,
    pub explanation: usize,
}

/// Ordered rules; the first whose conjunction holds wins. The last rule must
/// be a terminal default (no conditions) so evaluation is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn validate(&self) -> Result<()> {
        let last = self
            .rules
            .last()
            .ok_or_else(|| Error::Config("rule set is empty".into()))?;
        if !last.conditions.is_empty() {
            return Err(Error::Config(
                "last rule must be an unconditional default".into(),
            ));
        }
        Ok(())
    }
}

/// One catalog entry: an explanation text, the decision it implies, and its
/// position in an optional concept hierarchy (tier 1 is coarsest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    pub y: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(default = "default_tier")]
    pub level: u8,
}

fn default_tier() -> u8 {
    1
}

/// Dense, indexed catalog of admissible explanations with a total
/// explanation-to-decision map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExplanationSpace {
    entries: Vec<Explanation>,
}

impl ExplanationSpace {
    pub fn new(entries: Vec<Explanation>) -> Result<Self> {
        let space = Self { entries };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("explanation space is empty".into()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if !(1..=3).contains(&e.level) {
                return Err(Error::Config(format!(
                    "explanation {i}: hierarchy level {} out of range 1..3",
                    e.level
                )));
            }
            if let Some(p) = e.parent {
                let parent = self.entries.get(p).ok_or_else(|| {
                    Error::Config(format!("explanation {i}: parent {p} out of range"))
                })?;
                if parent.y != e.y {
                    return Err(Error::Config(format!(
                        "explanation {i}: decision disagrees with parent {p}"
                    )));
                }
                if parent.level >= e.level {
                    return Err(Error::Config(format!(
                        "explanation {i}: parent {p} is not on a coarser tier"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Explanation] {
        &self.entries
    }

    /// Decision implied by explanation `e`; `None` if out of range.
    pub fn e_to_y(&self, e: usize) -> Option<bool> {
        self.entries.get(e).map(|x| x.y)
    }

    pub fn text(&self, e: usize) -> Option<&str> {
        self.entries.get(e).map(|x| x.text.as_str())
    }

    /// Ancestor of `e` at hierarchy tier `tier` (or `e` itself when already
    /// at or above that tier).
    pub fn ancestor_at_level(&self, e: usize, tier: u8) -> usize {
        let mut cur = e;
        while self.entries[cur].level > tier {
            match self.entries[cur].parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        cur
    }
}

/// A complete labeling scheme: the discretizations its rules read, the
/// explanation catalog, and the ordered rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingScheme {
    pub discretizations: Vec<DiscretizationSpec>,
    pub explanations: ExplanationSpace,
    pub rules: RuleSet,
}

impl LabelingScheme {
    pub fn validate(&self) -> Result<()> {
        for d in &self.discretizations {
            d.validate()?;
        }
        for (i, d) in self.discretizations.iter().enumerate() {
            if self.discretizations[..i].iter().any(|o| o.column == d.column) {
                return Err(Error::Config(format!(
                    "duplicate discretization for column `{}`",
                    d.column
                )));
            }
        }
        self.explanations.validate()?;
        self.rules.validate()?;
        for (ri, rule) in self.rules.rules.iter().enumerate() {
            let implied = self.explanations.e_to_y(rule.explanation).ok_or_else(|| {
                Error::Config(format!(
                    "rule {ri}: explanation index {} out of range",
                    rule.explanation
                ))
            })?;
            if implied != rule.y {
                return Err(Error::Config(format!(
                    "rule {ri}: decision {} disagrees with explanation {}",
                    rule.y, rule.explanation
                )));
            }
            for pred in &rule.conditions {
                let spec = self
                    .discretizations
                    .iter()
                    .find(|d| d.column == pred.column)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "rule {ri}: predicate references unknown column `{}`",
                            pred.column
                        ))
                    })?;
                if pred.op.max_level() >= spec.n_levels() {
                    return Err(Error::Config(format!(
                        "rule {ri}: predicate level exceeds `{}`'s {} levels",
                        pred.column,
                        spec.n_levels()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let scheme: LabelingScheme = serde_json::from_str(s)?;
        scheme.validate()?;
        Ok(scheme)
    }

    /// Resolve column references against a table, compiling rules to spec
    /// indices for evaluation.
    pub fn bind<'a>(&'a self, table: &FeatureTable) -> Result<BoundScheme<'a>> {
        self.validate()?;
        let mut spec_of_column = HashMap::new();
        let mut table_col = Vec::with_capacity(self.discretizations.len());
        for (i, d) in self.discretizations.iter().enumerate() {
            let col = table.column_index(&d.column).ok_or_else(|| {
                Error::Data(format!(
                    "table is missing column `{}` referenced by the rules",
                    d.column
                ))
            })?;
            spec_of_column.insert(d.column.as_str(), i);
            table_col.push(col);
        }
        let compiled = self
            .rules
            .rules
            .iter()
            .map(|r| CompiledRule {
                conditions: r
                    .conditions
                    .iter()
                    .map(|p| (spec_of_column[p.column.as_str()], p.op))
                    .collect(),
                y: r.y,
                explanation: r.explanation,
            })
            .collect();
        Ok(BoundScheme {
            scheme: self,
            table_col,
            compiled,
        })
    }
}

struct CompiledRule {
    conditions: Vec<(usize, LevelOp)>,
    y: bool,
    explanation: usize,
}

/// A scheme bound to a table schema, ready for per-row evaluation.
pub struct BoundScheme<'a> {
    scheme: &'a LabelingScheme,
    /// Table column index per discretization.
    table_col: Vec<usize>,
    compiled: Vec<CompiledRule>,
}

impl<'a> BoundScheme<'a> {
    pub fn scheme(&self) -> &'a LabelingScheme {
        self.scheme
    }

    pub fn n_specs(&self) -> usize {
        self.table_col.len()
    }

    /// Raw cell values of row `row` for each discretization, in spec order.
    pub fn raw_values(&self, table: &FeatureTable, row: usize) -> Vec<f64> {
        self.table_col.iter().map(|&c| table.column(c)[row]).collect()
    }

    /// Noise-free discretized levels of row `row`, in spec order.
    pub fn levels(&self, table: &FeatureTable, row: usize) -> Vec<Option<usize>> {
        self.scheme
            .discretizations
            .iter()
            .zip(&self.table_col)
            .map(|(d, &c)| d.level_of_opt(table.column(c)[row]))
            .collect()
    }

    /// First matching rule's labels for the given level assignment.
    pub fn apply_levels(&self, levels: &[Option<usize>]) -> (bool, usize) {
        for rule in &self.compiled {
            let holds = rule
                .conditions
                .iter()
                .all(|&(spec, op)| levels[spec].is_some_and(|l| op.matches(l)));
            if holds {
                return (rule.y, rule.explanation);
            }
        }
        unreachable!("rule sets always end in an unconditional default");
    }

    /// Noise-free labels for row `row` of the bound table.
    pub fn apply_row(&self, table: &FeatureTable, row: usize) -> (bool, usize) {
        self.apply_levels(&self.levels(table, row))
    }
}
