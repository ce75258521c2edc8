//! Feature tables, labeled examples, HELOC CSV ingestion and cleanup, and a
//! seeded synthetic sampler for licence-free runs.
//!
//! Missing values are carried as NaN sentinels inside the numeric columns
//! ([`NULL`]); there is no separate mask table.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::rules::ExplanationSpace;
use crate::seed;

/// Null marker used inside feature columns.
pub const NULL: f64 = f64::NAN;

/// True if a cell holds the null marker.
pub fn is_null(x: f64) -> bool {
    x.is_nan()
}

/// Column-major numeric table with named columns.
///
/// Immutable after construction; all operations that change cells return a
/// new table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureTable {
    /// Build a table, validating that columns share one length and names are
    /// unique.
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, |c| c.len());
        if let Some(bad) = columns.iter().position(|c| c.len() != n_rows) {
            return Err(Error::Data(format!(
                "column `{}` has length {}, expected {}",
                names[bad],
                columns[bad].len(),
                n_rows
            )));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::Data(format!("duplicate column name `{a}`")));
            }
        }
        Ok(Self { names, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        self.column_index(name).map(|i| self.column(i))
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Materialize row `i`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// New table containing the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        Self {
            names: self.names.clone(),
            columns,
            n_rows: rows.len(),
        }
    }

    /// New table without the named column; no-op if the column is absent.
    pub fn drop_column(&self, name: &str) -> Self {
        match self.column_index(name) {
            None => self.clone(),
            Some(i) => {
                let mut names = self.names.clone();
                let mut columns = self.columns.clone();
                names.remove(i);
                columns.remove(i);
                Self {
                    names,
                    columns,
                    n_rows: self.n_rows,
                }
            }
        }
    }

    /// Error if any column consists entirely of nulls (vacuously fine on a
    /// zero-row table).
    pub fn check_no_all_null_column(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Ok(());
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            if col.iter().all(|&v| is_null(v)) {
                return Err(Error::Data(format!("column `{name}` is entirely null")));
            }
        }
        Ok(())
    }
}

/// One training example: features plus decision, with an optional
/// explanation index into an [`ExplanationSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub y: bool,
    pub e: Option<usize>,
}

/// A labeled dataset: feature table, decisions, optional explanations, and
/// the explanation catalog they index into.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: FeatureTable,
    pub y: Vec<bool>,
    pub e: Vec<Option<usize>>,
    pub space: ExplanationSpace,
}

impl LabeledDataset {
    /// Build a dataset, validating lengths and that every present
    /// explanation maps back to its row's decision.
    pub fn new(
        features: FeatureTable,
        y: Vec<bool>,
        e: Vec<Option<usize>>,
        space: ExplanationSpace,
    ) -> Result<Self> {
        if y.len() != features.n_rows() || e.len() != features.n_rows() {
            return Err(Error::Data(format!(
                "labels ({} y, {} e) do not match {} rows",
                y.len(),
                e.len(),
                features.n_rows()
            )));
        }
        for (i, (yi, ei)) in y.iter().zip(&e).enumerate() {
            if let Some(ei) = *ei {
                let ey = space.e_to_y(ei).ok_or_else(|| {
                    Error::Data(format!("row {i}: explanation index {ei} out of range"))
                })?;
                if ey != *yi {
                    return Err(Error::Data(format!(
                        "row {i}: explanation {ei} implies y={ey} but row has y={yi}"
                    )));
                }
            }
        }
        Ok(Self { features, y, e, space })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample {
            features: self.features.row(i),
            y: self.y[i],
            e: self.e[i],
        }
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            e: rows.iter().map(|&r| self.e[r]).collect(),
            space: self.space.clone(),
        }
    }

    /// True when every row carries an explanation.
    pub fn fully_explained(&self) -> bool {
        self.e.iter().all(|e| e.is_some())
    }

    /// Write `features + Y + E_index + E_text` as CSV. Rows without an
    /// explanation get empty E cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.features.names().to_vec();
        header.extend(["Y".into(), "E_index".into(), "E_text".into()]);
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self
                .features
                .row(i)
                .iter()
                .map(|v| format_cell(*v))
                .collect();
            rec.push(if self.y[i] { "1".into() } else { "0".into() });
            match self.e[i] {
                Some(e) => {
                    rec.push(e.to_string());
                    rec.push(self.space.text(e).unwrap_or_default().to_string());
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic cell formatting: integers without a decimal point,
/// everything else via the shortest roundtrip form.
pub fn format_cell(v: f64) -> String {
    if is_null(v) {
        return String::new();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

// ---------------------------------------------------------------------------
// HELOC ingestion and cleanup
// ---------------------------------------------------------------------------

/// Outcome column of the HELOC file.
pub const FICO_OUTCOME: &str = "RiskPerformance";

/// Feature columns of the raw HELOC file, in file order.
pub const FICO_RAW_FEATURES: [&str; 23] = [
    "ExternalRiskEstimate",
    "MSinceOldestTradeOpen",
    "MSinceMostRecentTradeOpen",
    "AverageMInFile",
    "NumSatisfactoryTrades",
    "NumTrades60Ever2DerogPubRec",
    "NumTrades90Ever2DerogPubRec",
    "PercentTradesNeverDelq",
    "MSinceMostRecentDelq",
    "MaxDelq2PublicRecLast12M",
    "MaxDelqEver",
    "NumTotalTrades",
    "NumTradesOpeninLast12M",
    "PercentInstallTrades",
    "MSinceMostRecentInqexcl7days",
    "NumInqLast6M",
    "NumInqLast6Mexcl7days",
    "NetFractionRevolvingBurden",
    "NetFractionInstallBurden",
    "NumRevolvingTradesWBalance",
    "NumInstallTradesWBalance",
    "NumBank2NatlTradesWHighUtilization",
    "PercentTradesWBalance",
];

/// Report of what [`preprocess_fico`] changed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessReport {
    pub rows_removed: usize,
    pub rows_remaining: usize,
    pub substitutions: Vec<Substitution>,
}

/// One substitution rule application: `count` cells of `column` holding
/// `special_value` became `replacement` (`None` = null marker).
#[derive(Debug, Clone, PartialEq)]
pub struct Substitution {
    pub column: String,
    pub special_value: f64,
    pub replacement: Option<f64>,
    pub count: usize,
}

/// Load the HELOC CSV: header-validated, outcome column separated out and
/// decoded (`Good` = true). Special values (-9/-8/-7) pass through untouched.
pub fn load_fico_csv(path: &Path) -> Result<(FeatureTable, Vec<bool>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let mut expected: Vec<&str> = vec![FICO_OUTCOME];
    expected.extend(FICO_RAW_FEATURES);
    let missing: Vec<String> = expected
        .iter()
        .filter(|c| !header.iter().any(|h| h == *c))
        .map(|c| c.to_string())
        .collect();
    let unexpected: Vec<String> = header
        .iter()
        .filter(|h| !expected.contains(&h.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(Error::SchemaMismatch { missing, unexpected });
    }

    let outcome_idx = header.iter().position(|h| h == FICO_OUTCOME).unwrap();
    let feature_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != outcome_idx)
        .map(|(i, n)| (i, n.clone()))
        .collect();

    let mut outcomes = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); feature_cols.len()];
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let raw = record.get(outcome_idx).unwrap_or("").trim();
        match raw {
            "Good" => outcomes.push(true),
            "Bad" => outcomes.push(false),
            other => {
                return Err(Error::NonNumericCell {
                    column: FICO_OUTCOME.into(),
                    row: row_idx,
                    value: other.into(),
                })
            }
        }
        for (k, (file_idx, name)) in feature_cols.iter().enumerate() {
            let cell = record.get(*file_idx).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                column: name.clone(),
                row: row_idx,
                value: cell.into(),
            })?;
            columns[k].push(v);
        }
    }
    let names = feature_cols.into_iter().map(|(_, n)| n).collect();
    Ok((FeatureTable::new(names, columns)?, outcomes))
}

/// Clean up the raw HELOC feature table:
///
/// 1. drop rows where every feature is -9 (no record at all);
/// 2. drop the `ExternalRiskEstimate` column;
/// 3. `MSinceMostRecentDelq` = -7 becomes 84 months;
/// 4. `MSinceMostRecentInqexcl7days` = -7 becomes 0 months;
/// 5. remaining -8 cells become the null marker;
/// 6. `MaxDelq2PublicRecLast12M` above 7 is clamped to 7.
///
/// Total and idempotent on already-cleaned tables.
pub fn preprocess_fico(table: &FeatureTable) -> Result<(FeatureTable, PreprocessReport)> {
    let input_rows = table.n_rows();
    let keep: Vec<usize> = (0..input_rows)
        .filter(|&r| !table.columns().iter().all(|c| c[r] == -9.0))
        .collect();
    let rows_removed = input_rows - keep.len();
    let trimmed = table.select_rows(&keep).drop_column("ExternalRiskEstimate");

    let mut names = trimmed.names().to_vec();
    let mut columns: Vec<Vec<f64>> = trimmed.columns().to_vec();
    let mut substitutions = Vec::new();

    let substitute = |names: &[String],
                          columns: &mut [Vec<f64>],
                          col: &str,
                          from: f64,
                          to: Option<f64>,
                          subs: &mut Vec<Substitution>,
                          pred: &dyn Fn(f64) -> bool| {
        if let Some(i) = names.iter().position(|n| n == col) {
            let mut count = 0;
            for v in columns[i].iter_mut() {
                if pred(*v) {
                    *v = to.unwrap_or(NULL);
                    count += 1;
                }
            }
            if count > 0 {
                subs.push(Substitution {
                    column: col.to_string(),
                    special_value: from,
                    replacement: to,
                    count,
                });
            }
        }
    };

    substitute(&names, &mut columns, "MSinceMostRecentDelq", -7.0, Some(84.0), &mut substitutions, &|v| v == -7.0);
    substitute(&names, &mut columns, "MSinceMostRecentInqexcl7days", -7.0, Some(0.0), &mut substitutions, &|v| v == -7.0);

    // Remaining -8 cells (no usable trades/inquiries) become nulls, column
    // by column so the report stays per-column.
    for (i, name) in names.iter().enumerate() {
        let mut count = 0;
        for v in columns[i].iter_mut() {
            if *v == -8.0 {
                *v = NULL;
                count += 1;
            }
        }
        if count > 0 {
            substitutions.push(Substitution {
                column: name.clone(),
                special_value: -8.0,
                replacement: None,
                count,
            });
        }
    }

    substitute(&names, &mut columns, "MaxDelq2PublicRecLast12M", 8.0, Some(7.0), &mut substitutions, &|v| v > 7.0);

    let names_out = std::mem::take(&mut names);
    let out = FeatureTable::new(names_out, columns)?;
    out.check_no_all_null_column()?;
    let report = PreprocessReport {
        rows_removed,
        rows_remaining: out.n_rows(),
        substitutions,
    };
    Ok((out, report))
}

/// Replace nulls with per-column medians.
///
/// With `medians` supplied (test-fold path) they are used verbatim; without,
/// medians are computed from the table's non-null cells (train-fold path).
/// Returns the cleaned table and the medians actually used, so test folds
/// can reuse train-fold medians.
pub fn impute_nulls_median(
    table: &FeatureTable,
    medians: Option<&[f64]>,
) -> Result<(FeatureTable, Vec<f64>)> {
    if let Some(m) = medians {
        if m.len() != table.n_cols() {
            return Err(Error::Dimension {
                expected: table.n_cols(),
                got: m.len(),
            });
        }
    }
    let used: Vec<f64> = match medians {
        Some(m) => m.to_vec(),
        None => table
            .names()
            .iter()
            .zip(table.columns())
            .map(|(name, col)| {
                let mut vals: Vec<f64> = col.iter().copied().filter(|v| !is_null(*v)).collect();
                if vals.is_empty() {
                    return Err(Error::Data(format!(
                        "column `{name}` is entirely null and no median was supplied"
                    )));
                }
                vals.sort_by(f64::total_cmp);
                let n = vals.len();
                Ok(if n % 2 == 1 {
                    vals[n / 2]
                } else {
                    (vals[n / 2 - 1] + vals[n / 2]) / 2.0
                })
            })
            .collect::<Result<_>>()?,
    };
    let columns = table
        .columns()
        .iter()
        .zip(&used)
        .map(|(col, &m)| col.iter().map(|&v| if is_null(v) { m } else { v }).collect())
        .collect();
    let out = FeatureTable::new(table.names().to_vec(), columns)?;
    Ok((out, used))
}

// ---------------------------------------------------------------------------
// Synthetic sampler (post-cleanup schema)
// ---------------------------------------------------------------------------

/// Per-column sampling ranges for the synthetic HELOC-like table. Uniform
/// ranges for the rule-relevant columns are tuned so that every base
/// explanation shows up with frequency >= 2%.
const FICO_SAMPLE_SPEC: [(&str, SampleDist); 22] = [
    ("MSinceOldestTradeOpen", SampleDist::IntRange(24, 400)),
    ("MSinceMostRecentTradeOpen", SampleDist::IntRange(0, 24)),
    ("AverageMInFile", SampleDist::Continuous(12.0, 120.0)),
    ("NumSatisfactoryTrades", SampleDist::IntRange(3, 40)),
    ("NumTrades60Ever2DerogPubRec", SampleDist::IntRange(0, 4)),
    ("NumTrades90Ever2DerogPubRec", SampleDist::IntRange(0, 3)),
    ("PercentTradesNeverDelq", SampleDist::Continuous(60.0, 100.0)),
    ("MSinceMostRecentDelq", SampleDist::IntRange(0, 84)),
    ("MaxDelq2PublicRecLast12M", SampleDist::IntRange(3, 7)),
    ("MaxDelqEver", SampleDist::IntRange(2, 8)),
    ("NumTotalTrades", SampleDist::IntRange(5, 50)),
    ("NumTradesOpeninLast12M", SampleDist::IntRange(0, 6)),
    ("PercentInstallTrades", SampleDist::Continuous(0.0, 100.0)),
    ("MSinceMostRecentInqexcl7days", SampleDist::IntRange(0, 48)),
    ("NumInqLast6M", SampleDist::IntRange(0, 8)),
    ("NumInqLast6Mexcl7days", SampleDist::IntRange(0, 8)),
    ("NetFractionRevolvingBurden", SampleDist::Continuous(0.0, 100.0)),
    ("NetFractionInstallBurden", SampleDist::Continuous(0.0, 100.0)),
    ("NumRevolvingTradesWBalance", SampleDist::IntRange(0, 15)),
    ("NumInstallTradesWBalance", SampleDist::IntRange(0, 10)),
    ("NumBank2NatlTradesWHighUtilization", SampleDist::IntRange(0, 5)),
    ("PercentTradesWBalance", SampleDist::Continuous(0.0, 100.0)),
];

#[derive(Clone, Copy)]
enum SampleDist {
    /// Uniform over `lo..=hi` integers.
    IntRange(i64, i64),
    /// Uniform over `[lo, hi)`.
    Continuous(f64, f64),
}

/// Generate `n` rows over the post-cleanup HELOC schema. Deterministic per
/// seed; row `i` has its own derived stream, so prefixes are stable across
/// different `n`.
pub fn sample_fico_like(n: usize, seed: u64) -> Result<FeatureTable> {
    if n == 0 {
        return Err(Error::Data("sample size must be at least 1".into()));
    }
    let rows: Vec<Vec<f64>> = exec::map_indexed(n, |i| {
        let mut rng = seed::rng(seed, "fico_sample", i as u64);
        FICO_SAMPLE_SPEC
            .iter()
            .map(|(_, dist)| match *dist {
                SampleDist::IntRange(lo, hi) => rng.gen_range(lo..=hi) as f64,
                SampleDist::Continuous(lo, hi) => rng.gen_range(lo..hi),
            })
            .collect()
    });
    let names: Vec<String> = FICO_SAMPLE_SPEC.iter().map(|(n, _)| n.to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); names.len()];
    for row in rows {
        for (c, v) in row.into_iter().enumerate() {
            columns[c].push(v);
        }
    }
    FeatureTable::new(names, columns)
}
