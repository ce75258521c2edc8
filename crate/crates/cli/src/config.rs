//! Experiment manifest: a JSON file with a `sweep` array of run
//! configurations. CLI flags override the scalar fields of every point.

use serde::{Deserialize, Serialize};

use tedc::classifiers::Algorithm;
use tedc::error::{Error, Result};
use tedc::fico::FicoExplanationConfig;
use tedc::retention::GranularityLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Synthetic credit-approval sample.
    Fico,
    /// Synthetic employee-retention sample.
    Retention,
    /// The licensed credit file supplied via `--fico-file`.
    FicoFile,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::Fico => "fico",
            DatasetKind::Retention => "retention",
            DatasetKind::FicoFile => "fico-file",
        })
    }
}

/// Which explanation catalog the labeler uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExplanationSetting {
    /// Credit catalog: report up to `m` unsatisfied conditions.
    Fico {
        m: usize,
        #[serde(default)]
        include_inquiry: bool,
    },
    /// Retention hierarchy granularity.
    Retention { level: u8 },
}

impl ExplanationSetting {
    pub fn label(&self) -> String {
        match self {
            ExplanationSetting::Fico { m, include_inquiry } => {
                format!("m={m}{}", if *include_inquiry { "+inquiry" } else { "" })
            }
            ExplanationSetting::Retention { level } => format!("level={level}"),
        }
    }

    pub fn fico_config(&self) -> Result<FicoExplanationConfig> {
        match self {
            ExplanationSetting::Fico { m, include_inquiry } => {
                Ok(FicoExplanationConfig::new(*m, *include_inquiry))
            }
            ExplanationSetting::Retention { .. } => Err(Error::Config(
                "credit datasets need an explanation setting of the form {\"m\": .., \"include_inquiry\": ..}".into(),
            )),
        }
    }

    pub fn retention_level(&self) -> Result<GranularityLevel> {
        match self {
            ExplanationSetting::Retention { level } => GranularityLevel::try_from(*level),
            ExplanationSetting::Fico { .. } => Err(Error::Config(
                "retention datasets need an explanation setting of the form {\"level\": 1..3}".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSetting {
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub epsilon: f64,
}

fn default_k() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_n_rows() -> usize {
    10_000
}

fn default_e_fraction() -> f64 {
    1.0
}

/// One sweep point: dataset, algorithm, and experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub name: String,
    pub dataset: DatasetKind,
    pub algorithm: Algorithm,
    #[serde(default = "default_explanations")]
    pub explanations: ExplanationSetting,
    #[serde(default)]
    pub noise: NoiseSetting,
    #[serde(default = "default_e_fraction")]
    pub e_fraction: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_rows")]
    pub n_rows: usize,
    /// Random-search budget; the per-algorithm default is 20.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_iterations: Option<usize>,
    #[serde(default)]
    pub include_oracle: bool,
    #[serde(default)]
    pub impute_append_y: bool,
}

fn default_explanations() -> ExplanationSetting {
    ExplanationSetting::Fico { m: 1, include_inquiry: false }
}

impl SweepPoint {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.name.is_empty() {
            problems.push("name must not be empty".to_string());
        }
        if !(self.e_fraction > 0.0 && self.e_fraction <= 1.0) {
            problems.push(format!("e_fraction must be in (0, 1], got {}", self.e_fraction));
        }
        if self.k < 2 {
            problems.push(format!("k must be at least 2, got {}", self.k));
        }
        if self.seeds.is_empty() {
            problems.push("seeds must not be empty".to_string());
        }
        if self.n_rows == 0 && self.dataset != DatasetKind::FicoFile {
            problems.push("n_rows must be at least 1".to_string());
        }
        if self.search_iterations == Some(0) {
            problems.push("search_iterations must be at least 1".to_string());
        }
        if self.noise.tau < 0.0 || !(0.0..=1.0).contains(&self.noise.epsilon) {
            problems.push(format!(
                "noise must satisfy tau >= 0 and 0 <= epsilon <= 1, got tau={} epsilon={}",
                self.noise.tau, self.noise.epsilon
            ));
        }
        match self.dataset {
            DatasetKind::Retention => {
                if let Err(e) = self.explanations.retention_level() {
                    problems.push(e.to_string());
                }
            }
            DatasetKind::Fico | DatasetKind::FicoFile => {
                match self.explanations.fico_config() {
                    Ok(cfg) => {
                        if let Err(e) = tedc::fico::expanded_scheme(&cfg) {
                            problems.push(e.to_string());
                        }
                    }
                    Err(e) => problems.push(e.to_string()),
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "sweep point `{}`: {}",
                self.name,
                problems.join("; ")
            )))
        }
    }
}

/// Top-level manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub sweep: Vec<SweepPoint>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ConfigFile = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep array is empty".into()));
        }
        for point in &self.sweep {
            point.validate()?;
        }
        Ok(())
    }
}
