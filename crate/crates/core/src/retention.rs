//! Employee-retention labeling: an eight-feature schema, derived discretized
//! features, and a three-tier hierarchy of risk explanations with one
//! conjunctive rule per leaf.
//!
//! The tier-1 catalog names eight broad reasons an employee may be at risk
//! (promotion lag, new employee, disappointing evaluation, compensation
//! mismatch, acquisition, poor fit, mid-career crisis, seeking higher
//! salary); tier 2 splits most of them by organization attrition group and
//! tier 3 by position and performance qualifiers. "No Risk" is the single
//! negative-decision explanation at every tier.
//!
//! The numeric thresholds behind the leaves (tenure cutoffs, promotion-lag
//! months per position, evaluation bands) are invented defaults; they live
//! in the rule config JSON shipped with the repo and can be edited per
//! deployment without code changes.

use serde::{Deserialize, Serialize};

use crate::dataset::{format_cell, FeatureTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::noise::{self, NoiseConfig};
use crate::rules::{
    DiscretizationSpec, Explanation, ExplanationSpace, LabelingScheme, LevelOp, Predicate, Rule,
    RuleSet,
};
use crate::seed;

use rand::Rng;
use std::path::Path;

/// The eight raw features, in column order.
pub const RETENTION_FEATURES: [&str; 8] = [
    "BusinessUnit",
    "Position",
    "Salary",
    "MonthsSinceHire",
    "MonthsSincePromotion",
    "LastEvaluation",
    "EvaluationSlope",
    "StrongPotential",
];

pub const N_ORGS: u32 = 33;
pub const N_POSITION_CODES: u32 = 12;

// Derived rule-feature columns.
const ATTR: &str = "attrition_group";
const POS: &str = "position_category";
const COMP: &str = "salary_ratio";
const TENURE: &str = "months_since_hire";
const PROMO: &str = "months_since_promotion";
const EVAL: &str = "last_evaluation";
const SLOPE: &str = "evaluation_slope";
const POT: &str = "strong_potential";
const ACQ: &str = "acquired_org";

/// Explanation granularity requested from the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum GranularityLevel {
    Level1,
    Level2,
    Level3,
}

impl GranularityLevel {
    pub const ALL: [GranularityLevel; 3] =
        [GranularityLevel::Level1, GranularityLevel::Level2, GranularityLevel::Level3];

    pub fn tier(self) -> u8 {
        match self {
            GranularityLevel::Level1 => 1,
            GranularityLevel::Level2 => 2,
            GranularityLevel::Level3 => 3,
        }
    }
}

impl TryFrom<u8> for GranularityLevel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(GranularityLevel::Level1),
            2 => Ok(GranularityLevel::Level2),
            3 => Ok(GranularityLevel::Level3),
            other => Err(Error::Config(format!("granularity level must be 1..=3, got {other}"))),
        }
    }
}

impl From<GranularityLevel> for u8 {
    fn from(l: GranularityLevel) -> u8 {
        l.tier()
    }
}

/// Attrition group of an organization: orgs cycle through high, medium, and
/// low turnover (org 1 is high-attrition, org 3 low).
pub fn attrition_group(org: u32) -> usize {
    match org % 3 {
        1 => 0, // high
        2 => 1, // medium
        _ => 2, // low
    }
}

/// Orgs that joined through a recent acquisition.
pub fn is_acquired_org(org: u32) -> bool {
    org == 31 || org == 32
}

/// Position category from the raw position code: codes 1-3 are entry level,
/// 4-6 junior, 7-9 senior, 10-12 established.
pub fn position_category(code: u32) -> usize {
    ((code - 1) / 3) as usize
}

/// Derive the rule-feature table from the raw eight-feature table: attrition
/// group, position category, salary ratio against the position's average in
/// this dataset, the acquisition flag, and pass-through duration/evaluation
/// columns.
pub fn derive_features(table: &FeatureTable) -> Result<FeatureTable> {
    let col = |name: &str| {
        table
            .column_by_name(name)
            .ok_or_else(|| Error::Data(format!("retention table is missing column `{name}`")))
    };
    let org = col("BusinessUnit")?;
    let position = col("Position")?;
    let salary = col("Salary")?;
    let msh = col("MonthsSinceHire")?;
    let msp = col("MonthsSincePromotion")?;
    let eval = col("LastEvaluation")?;
    let slope = col("EvaluationSlope")?;
    let pot = col("StrongPotential")?;

    let n = table.n_rows();
    let mut attr = Vec::with_capacity(n);
    let mut pos_cat = Vec::with_capacity(n);
    let mut acquired = Vec::with_capacity(n);
    let mut pos_codes = Vec::with_capacity(n);
    for r in 0..n {
        let o = org[r];
        if o.fract() != 0.0 || !(1.0..=N_ORGS as f64).contains(&o) {
            return Err(Error::Data(format!("row {r}: unknown organization code {o}")));
        }
        let p = position[r];
        if p.fract() != 0.0 || !(1.0..=N_POSITION_CODES as f64).contains(&p) {
            return Err(Error::Data(format!("row {r}: unknown position code {p}")));
        }
        if msh[r] < 0.0 || msp[r] < 0.0 {
            return Err(Error::Data(format!("row {r}: negative month count")));
        }
        attr.push(attrition_group(o as u32) as f64);
        pos_cat.push(position_category(p as u32) as f64);
        acquired.push(f64::from(is_acquired_org(o as u32)));
        pos_codes.push(p as u32);
    }

    // Average salary per raw position code, over this dataset.
    let mut sums = vec![0.0f64; N_POSITION_CODES as usize + 1];
    let mut counts = vec![0usize; N_POSITION_CODES as usize + 1];
    for (r, &code) in pos_codes.iter().enumerate() {
        sums[code as usize] += salary[r];
        counts[code as usize] += 1;
    }
    let ratio: Vec<f64> = pos_codes
        .iter()
        .enumerate()
        .map(|(r, &code)| {
            let mean = sums[code as usize] / counts[code as usize] as f64;
            if mean == 0.0 {
                1.0
            } else {
                salary[r] / mean
            }
        })
        .collect();

    FeatureTable::new(
        vec![
            ATTR.into(),
            POS.into(),
            COMP.into(),
            TENURE.into(),
            PROMO.into(),
            EVAL.into(),
            SLOPE.into(),
            POT.into(),
            ACQ.into(),
        ],
        vec![
            attr,
            pos_cat,
            ratio,
            msh.to_vec(),
            msp.to_vec(),
            eval.to_vec(),
            slope.to_vec(),
            pot.to_vec(),
            acquired,
        ],
    )
}

fn discretizations() -> Vec<DiscretizationSpec> {
    vec![
        DiscretizationSpec::new(ATTR, vec![0.5, 1.5], vec!["high_attrition", "medium_attrition", "low_attrition"]),
        DiscretizationSpec::new(POS, vec![0.5, 1.5, 2.5], vec!["entry", "junior", "senior", "established"]),
        // Salary competitiveness: within 20% of the position average is
        // "medium".
        DiscretizationSpec::new(COMP, vec![0.8, 1.2], vec!["low", "medium", "high"]),
        DiscretizationSpec::new(TENURE, vec![12.0, 96.0], vec!["new_hire", "early_tenure", "settled"]),
        // Promotion-lag cutoffs by position (entry/junior/senior), the
        // 121..179-month mid-career window, and everything beyond. Months
        // are integers, so (120, 179] is exactly 120 < months < 180.
        DiscretizationSpec::new(
            PROMO,
            vec![24.0, 36.0, 48.0, 120.0, 179.0],
            vec!["recent", "entry_lag", "junior_lag", "senior_lag", "mid_career_window", "long_overdue"],
        ),
        DiscretizationSpec::new(EVAL, vec![2.3, 3.1], vec!["low", "medium", "high"]),
        DiscretizationSpec::new(SLOPE, vec![-0.2, 0.2], vec!["declining", "flat", "improving"]),
        DiscretizationSpec::new(POT, vec![0.5], vec!["standard", "high_potential"]),
        DiscretizationSpec::new(ACQ, vec![0.5], vec!["no", "yes"]),
    ]
}

struct LeafDef {
    name: Option<&'static str>,
    conditions: Vec<Predicate>,
}

struct GroupDef {
    name: Option<&'static str>,
    leaves: Vec<LeafDef>,
}

struct ConceptDef {
    name: &'static str,
    groups: Vec<GroupDef>,
}

fn p(column: &str, op: LevelOp) -> Predicate {
    Predicate::new(column, op)
}

/// The risk-concept tree: 8 concepts, 16 tier-2 classes, 25 leaves. A group
/// or leaf without a name collapses into its parent node (undecomposed).
fn tree() -> Vec<ConceptDef> {
    use LevelOp::{Eq, Ge};
    let leaf = |name: Option<&'static str>, conditions: Vec<Predicate>| LeafDef { name, conditions };
    vec![
        ConceptDef {
            name: "Promotion Lag",
            groups: vec![
                GroupDef {
                    name: Some("High Attrition Organizations"),
                    leaves: vec![
                        leaf(Some("Junior-level"), vec![p(ATTR, Eq(0)), p(POS, Eq(1)), p(PROMO, Ge(2))]),
                        leaf(
                            Some("Senior-level, high potential"),
                            vec![p(ATTR, Eq(0)), p(POS, Eq(2)), p(PROMO, Ge(3)), p(POT, Eq(1))],
                        ),
                    ],
                },
                GroupDef {
                    name: Some("Medium Attrition Organizations"),
                    leaves: vec![
                        leaf(Some("Entry-level"), vec![p(ATTR, Eq(1)), p(POS, Eq(0)), p(PROMO, Ge(1))]),
                        leaf(
                            Some("Junior-level, strong performance, high potential"),
                            vec![p(ATTR, Eq(1)), p(POS, Eq(1)), p(PROMO, Ge(2)), p(EVAL, Eq(2)), p(POT, Eq(1))],
                        ),
                        leaf(
                            Some("Senior-level, strong performance, low compensation, high potential"),
                            vec![
                                p(ATTR, Eq(1)),
                                p(POS, Eq(2)),
                                p(PROMO, Ge(3)),
                                p(EVAL, Eq(2)),
                                p(COMP, Eq(0)),
                                p(POT, Eq(1)),
                            ],
                        ),
                    ],
                },
                GroupDef {
                    name: Some("Low Attrition Organizations"),
                    leaves: vec![
                        leaf(Some("Entry-level"), vec![p(ATTR, Eq(2)), p(POS, Eq(0)), p(PROMO, Ge(1))]),
                        leaf(
                            Some("Junior-level, strong performance, high potential"),
                            vec![p(ATTR, Eq(2)), p(POS, Eq(1)), p(PROMO, Ge(2)), p(EVAL, Eq(2)), p(POT, Eq(1))],
                        ),
                        leaf(
                            Some("Senior-level, strong performance, low compensation, high potential"),
                            vec![
                                p(ATTR, Eq(2)),
                                p(POS, Eq(2)),
                                p(PROMO, Ge(3)),
                                p(EVAL, Eq(2)),
                                p(COMP, Eq(0)),
                                p(POT, Eq(1)),
                            ],
                        ),
                    ],
                },
            ],
        },
        ConceptDef {
            name: "New Employee",
            groups: vec![
                GroupDef {
                    name: Some("High Attrition Organizations"),
                    leaves: vec![
                        leaf(Some("Entry-level"), vec![p(ATTR, Eq(0)), p(TENURE, Eq(0)), p(POS, Eq(0))]),
                        leaf(Some("Junior-level"), vec![p(ATTR, Eq(0)), p(TENURE, Eq(0)), p(POS, Eq(1))]),
                        leaf(Some("Senior-level"), vec![p(ATTR, Eq(0)), p(TENURE, Eq(0)), p(POS, Eq(2))]),
                    ],
                },
                GroupDef {
                    name: Some("Medium Attrition Organizations"),
                    leaves: vec![
                        leaf(Some("Entry-level"), vec![p(ATTR, Eq(1)), p(TENURE, Eq(0)), p(POS, Eq(0))]),
                        leaf(Some("Junior-level"), vec![p(ATTR, Eq(1)), p(TENURE, Eq(0)), p(POS, Eq(1))]),
                    ],
                },
            ],
        },
        ConceptDef {
            name: "Disappointing Evaluation",
            groups: vec![
                GroupDef {
                    name: Some("High Attrition Organizations"),
                    leaves: vec![leaf(None, vec![p(ATTR, Eq(0)), p(EVAL, Eq(0))])],
                },
                GroupDef {
                    name: Some("Medium Attrition Organizations"),
                    leaves: vec![leaf(None, vec![p(ATTR, Eq(1)), p(EVAL, Eq(0))])],
                },
            ],
        },
        ConceptDef {
            name: "Compensation Doesn't Match Evaluation",
            groups: vec![
                GroupDef {
                    name: Some("High Attrition Organizations, high evaluation"),
                    leaves: vec![leaf(None, vec![p(ATTR, Eq(0)), p(EVAL, Eq(2)), p(COMP, Eq(1))])],
                },
                GroupDef {
                    name: Some("High Attrition Organizations, medium evaluation"),
                    leaves: vec![leaf(None, vec![p(ATTR, Eq(0)), p(EVAL, Eq(1)), p(COMP, Eq(0))])],
                },
            ],
        },
        ConceptDef {
            name: "Part of Company Acquisition",
            groups: vec![
                GroupDef {
                    name: Some("High Attrition Organizations"),
                    leaves: vec![leaf(None, vec![p(ACQ, Eq(1)), p(ATTR, Eq(0))])],
                },
                GroupDef {
                    name: Some("Medium Attrition Organizations"),
                    leaves: vec![leaf(None, vec![p(ACQ, Eq(1)), p(ATTR, Eq(1))])],
                },
            ],
        },
        ConceptDef {
            name: "Company Not Right Fit",
            groups: vec![
                GroupDef {
                    name: Some("High Attrition Organizations"),
                    leaves: vec![leaf(None, vec![p(ATTR, Eq(0)), p(TENURE, Eq(1)), p(SLOPE, Eq(0))])],
                },
                GroupDef {
                    name: Some("Medium Attrition Organizations"),
                    leaves: vec![
                        leaf(Some("Junior-level"), vec![p(ATTR, Eq(1)), p(TENURE, Eq(1)), p(SLOPE, Eq(0)), p(POS, Eq(1))]),
                        leaf(Some("Senior-level"), vec![p(ATTR, Eq(1)), p(TENURE, Eq(1)), p(SLOPE, Eq(0)), p(POS, Eq(2))]),
                    ],
                },
                GroupDef {
                    name: Some("Low Attrition Organizations"),
                    leaves: vec![leaf(None, vec![p(ATTR, Eq(2)), p(TENURE, Eq(1)), p(SLOPE, Eq(0))])],
                },
            ],
        },
        ConceptDef {
            name: "Mid-Career Crisis",
            groups: vec![GroupDef {
                name: None,
                leaves: vec![leaf(None, vec![p(ATTR, Eq(0)), p(PROMO, Eq(4))])],
            }],
        },
        ConceptDef {
            name: "Seeking Higher Salary",
            groups: vec![GroupDef {
                name: None,
                leaves: vec![leaf(None, vec![p(ATTR, Eq(0)), p(EVAL, Eq(2)), p(COMP, Eq(0)), p(SLOPE, Eq(2))])],
            }],
        },
    ]
}

/// Flattened leaf with its class index at each granularity level.
struct FlatLeaf {
    class_at: [usize; 3],
    conditions: Vec<Predicate>,
}

struct Catalog {
    /// Risk-class texts per level (No Risk appended later).
    texts: [Vec<String>; 3],
    leaves: Vec<FlatLeaf>,
}

fn catalog() -> Catalog {
    let mut texts: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut leaves = Vec::new();
    for concept in tree() {
        let c_idx = texts[0].len();
        texts[0].push(concept.name.to_string());
        for group in concept.groups {
            let g_text = match group.name {
                Some(g) => format!("{} / {}", concept.name, g),
                None => concept.name.to_string(),
            };
            let g_idx = texts[1].len();
            texts[1].push(g_text.clone());
            for leaf in group.leaves {
                let l_text = match leaf.name {
                    Some(l) => format!("{} / {}", g_text, l),
                    None => g_text.clone(),
                };
                let l_idx = texts[2].len();
                texts[2].push(l_text);
                leaves.push(FlatLeaf {
                    class_at: [c_idx, g_idx, l_idx],
                    conditions: leaf.conditions,
                });
            }
        }
    }
    Catalog { texts, leaves }
}

/// Number of explanations (risk classes plus No Risk) at each level.
pub fn space_size(level: GranularityLevel) -> usize {
    let c = catalog();
    c.texts[level as usize].len() + 1
}

/// The labeling scheme at the requested granularity: the shared leaf rules
/// with explanation indices projected to that level's catalog, plus the
/// terminal No Risk default.
pub fn scheme_at(level: GranularityLevel) -> LabelingScheme {
    let c = catalog();
    let li = level as usize;
    let mut entries: Vec<Explanation> = c.texts[li]
        .iter()
        .map(|t| Explanation { text: t.clone(), y: true, parent: None, level: 1 })
        .collect();
    let no_risk = entries.len();
    entries.push(Explanation { text: "No Risk".into(), y: false, parent: None, level: 1 });

    let mut rules: Vec<Rule> = c
        .leaves
        .iter()
        .map(|leaf| Rule {
            conditions: leaf.conditions.clone(),
            y: true,
            explanation: leaf.class_at[li],
        })
        .collect();
    rules.push(Rule { conditions: vec![], y: false, explanation: no_risk });

    let scheme = LabelingScheme {
        discretizations: discretizations(),
        explanations: ExplanationSpace::new(entries).expect("catalog is statically valid"),
        rules: RuleSet { rules },
    };
    debug_assert!(scheme.validate().is_ok());
    scheme
}

/// Map class indices at `from` to their ancestor class at the coarser `to`
/// level. The No Risk class maps to No Risk.
pub fn class_projection(from: GranularityLevel, to: GranularityLevel) -> Result<Vec<usize>> {
    if to > from {
        return Err(Error::Config(format!(
            "cannot project level {} classes to the finer level {}",
            from.tier(),
            to.tier()
        )));
    }
    let c = catalog();
    let (fi, ti) = (from as usize, to as usize);
    let mut map = vec![usize::MAX; c.texts[fi].len() + 1];
    for leaf in &c.leaves {
        map[leaf.class_at[fi]] = leaf.class_at[ti];
    }
    let from_no_risk = c.texts[fi].len();
    map[from_no_risk] = c.texts[ti].len();
    debug_assert!(map.iter().all(|&m| m != usize::MAX));
    Ok(map)
}

/// The full concept tree as one explanation space with parent links: tier-1
/// concepts, named tier-2 groups, named tier-3 leaves, and No Risk.
pub fn full_hierarchy() -> ExplanationSpace {
    let mut entries = Vec::new();
    for concept in tree() {
        let c_node = entries.len();
        entries.push(Explanation { text: concept.name.to_string(), y: true, parent: None, level: 1 });
        for group in concept.groups {
            let g_node = match group.name {
                Some(g) => {
                    entries.push(Explanation {
                        text: format!("{} / {}", concept.name, g),
                        y: true,
                        parent: Some(c_node),
                        level: 2,
                    });
                    entries.len() - 1
                }
                None => c_node,
            };
            for leaf in group.leaves {
                if let Some(l) = leaf.name {
                    entries.push(Explanation {
                        text: format!("{} / {}", entries[g_node].text, l),
                        y: true,
                        parent: Some(g_node),
                        level: 3,
                    });
                }
            }
        }
    }
    entries.push(Explanation { text: "No Risk".into(), y: false, parent: None, level: 1 });
    ExplanationSpace::new(entries).expect("hierarchy is statically valid")
}

// ---------------------------------------------------------------------------
// Synthetic sampler
// ---------------------------------------------------------------------------

/// Sample `n` employees over the eight-feature schema. Deterministic per
/// seed with per-row streams. Distributions are tuned so that every leaf
/// explanation keeps an empirical frequency of at least 0.5% at n = 10^4.
pub fn sample_retention(n: usize, seed: u64) -> Result<FeatureTable> {
    if n == 0 {
        return Err(Error::Data("sample size must be at least 1".into()));
    }
    let rows: Vec<[f64; 8]> = crate::exec::map_indexed(n, |i| {
        let mut rng = seed::rng(seed, "retention_sample", i as u64);
        let org = rng.gen_range(1..=N_ORGS) as f64;
        // Position categories are weighted toward senior staff so the
        // deeper senior-level leaves stay populated.
        let u: f64 = rng.gen();
        let category = if u < 0.20 {
            0
        } else if u < 0.46 {
            1
        } else if u < 0.91 {
            2
        } else {
            3
        };
        let position = (category * 3 + rng.gen_range(1..=3u32)) as f64;
        let base = [52_000.0, 74_000.0, 98_000.0, 126_000.0][category as usize];
        let salary = base * rng.gen_range(0.40..1.70);
        // Tenure: a fifth of the workforce is in its first year.
        let months_since_hire = if rng.gen::<f64>() < 0.2 {
            rng.gen_range(0..=12u32)
        } else {
            rng.gen_range(13..=240u32)
        };
        // Promotions lag behind tenure; never before hire.
        let promo_raw = if rng.gen::<f64>() < 0.3 {
            rng.gen_range(0..=24u32)
        } else {
            rng.gen_range(25..=240u32)
        };
        let months_since_promotion = promo_raw.min(months_since_hire);
        let last_evaluation = rng.gen_range(1.0..5.0f64);
        let evaluation_slope = rng.gen_range(-1.0..1.0f64);
        let strong_potential = f64::from(rng.gen::<f64>() < 0.62);
        [
            org,
            position,
            salary,
            months_since_hire as f64,
            months_since_promotion as f64,
            last_evaluation,
            evaluation_slope,
            strong_potential,
        ]
    });
    let names: Vec<String> = RETENTION_FEATURES.iter().map(|s| s.to_string()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 8];
    for row in rows {
        for (c, v) in row.into_iter().enumerate() {
            columns[c].push(v);
        }
    }
    FeatureTable::new(names, columns)
}

/// Sample `n` employees and synthesize labels at `level`, with optional
/// noise. Stored features are the raw eight columns; rules run on the
/// derived table.
pub fn synthesize_dataset(
    n: usize,
    seed: u64,
    level: GranularityLevel,
    noise_cfg: &NoiseConfig,
) -> Result<LabeledDataset> {
    let table = sample_retention(n, seed)?;
    synthesize_from_table(&table, level, noise_cfg)
}

/// Label an existing raw table at `level`.
pub fn synthesize_from_table(
    table: &FeatureTable,
    level: GranularityLevel,
    noise_cfg: &NoiseConfig,
) -> Result<LabeledDataset> {
    let derived = derive_features(table)?;
    let scheme = scheme_at(level);
    let (y, e) = noise::synthesize_labels(&scheme, &derived, noise_cfg)?;
    LabeledDataset::new(
        table.clone(),
        y,
        e.into_iter().map(Some).collect(),
        scheme.explanations.clone(),
    )
}

/// Write the synthesized dataset as CSV with explanation columns for all
/// three levels: `features + Y + E_index_level1/2/3 + E_text` (finest text).
pub fn write_retention_csv(table: &FeatureTable, noise_cfg: &NoiseConfig, path: &Path) -> Result<()> {
    let derived = derive_features(table)?;
    let l3 = scheme_at(GranularityLevel::Level3);
    let (y, e3) = noise::synthesize_labels(&l3, &derived, noise_cfg)?;
    let to_l2 = class_projection(GranularityLevel::Level3, GranularityLevel::Level2)?;
    let to_l1 = class_projection(GranularityLevel::Level3, GranularityLevel::Level1)?;

    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = table.names().to_vec();
    header.extend([
        "Y".into(),
        "E_index_level1".into(),
        "E_index_level2".into(),
        "E_index_level3".into(),
        "E_text".into(),
    ]);
    w.write_record(&header)?;
    for r in 0..table.n_rows() {
        let mut rec: Vec<String> = table.row(r).iter().map(|v| format_cell(*v)).collect();
        rec.push(if y[r] { "1".into() } else { "0".into() });
        rec.push(to_l1[e3[r]].to_string());
        rec.push(to_l2[e3[r]].to_string());
        rec.push(e3[r].to_string());
        rec.push(l3.explanations.text(e3[r]).unwrap_or_default().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_sizes_are_9_17_26() {
        assert_eq!(space_size(GranularityLevel::Level1), 9);
        assert_eq!(space_size(GranularityLevel::Level2), 17);
        assert_eq!(space_size(GranularityLevel::Level3), 26);
        for level in GranularityLevel::ALL {
            let scheme = scheme_at(level);
            assert_eq!(scheme.explanations.len(), space_size(level));
            scheme.validate().unwrap();
        }
    }

    #[test]
    fn no_risk_is_the_unique_negative_explanation_at_every_level() {
        for level in GranularityLevel::ALL {
            let space = scheme_at(level).explanations;
            let negatives: Vec<usize> = (0..space.len())
                .filter(|&e| space.e_to_y(e) == Some(false))
                .collect();
            assert_eq!(negatives, vec![space.len() - 1]);
            assert_eq!(space.text(space.len() - 1), Some("No Risk"));
        }
    }

    #[test]
    fn every_leaf_chains_up_to_a_concept() {
        let h = full_hierarchy();
        let concepts: Vec<usize> = h
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.level == 1 && e.y)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(concepts.len(), 8);
        for (i, e) in h.entries().iter().enumerate() {
            if e.y {
                let root = h.ancestor_at_level(i, 1);
                assert!(concepts.contains(&root), "entry {i} does not reach a concept");
            }
        }
    }

    #[test]
    fn projection_tables_are_consistent() {
        let l3_to_l1 = class_projection(GranularityLevel::Level3, GranularityLevel::Level1).unwrap();
        let l3_to_l2 = class_projection(GranularityLevel::Level3, GranularityLevel::Level2).unwrap();
        let l2_to_l1 = class_projection(GranularityLevel::Level2, GranularityLevel::Level1).unwrap();
        assert_eq!(l3_to_l1.len(), 26);
        assert_eq!(l3_to_l2.len(), 26);
        assert_eq!(l2_to_l1.len(), 17);
        for e3 in 0..26 {
            assert_eq!(l2_to_l1[l3_to_l2[e3]], l3_to_l1[e3], "leaf {e3}");
        }
        // No Risk maps to No Risk.
        assert_eq!(l3_to_l1[25], 8);
        assert_eq!(l3_to_l2[25], 16);
        assert!(class_projection(GranularityLevel::Level1, GranularityLevel::Level3).is_err());
    }

    #[test]
    fn coarsening_consistency_on_sampled_rows() {
        let table = sample_retention(4000, 17).unwrap();
        let noise = NoiseConfig::noiseless(1);
        let d1 = synthesize_from_table(&table, GranularityLevel::Level1, &noise).unwrap();
        let d2 = synthesize_from_table(&table, GranularityLevel::Level2, &noise).unwrap();
        let d3 = synthesize_from_table(&table, GranularityLevel::Level3, &noise).unwrap();
        let to_l1 = class_projection(GranularityLevel::Level3, GranularityLevel::Level1).unwrap();
        let to_l2 = class_projection(GranularityLevel::Level3, GranularityLevel::Level2).unwrap();
        for r in 0..table.n_rows() {
            assert_eq!(d1.y[r], d3.y[r]);
            assert_eq!(d2.y[r], d3.y[r]);
            let e3 = d3.e[r].unwrap();
            assert_eq!(d1.e[r].unwrap(), to_l1[e3], "row {r}");
            assert_eq!(d2.e[r].unwrap(), to_l2[e3], "row {r}");
        }
    }

    #[test]
    fn salary_competitiveness_bands() {
        // Four employees share position 5; three earn 100k, one 125k, one
        // exactly the average of its own group.
        let mk = |salaries: Vec<f64>| {
            let n = salaries.len();
            FeatureTable::new(
                RETENTION_FEATURES.iter().map(|s| s.to_string()).collect(),
                vec![
                    vec![4.0; n],
                    vec![5.0; n],
                    salaries,
                    vec![100.0; n],
                    vec![10.0; n],
                    vec![3.0; n],
                    vec![0.0; n],
                    vec![0.0; n],
                ],
            )
            .unwrap()
        };
        // Mean = 100; 125 -> ratio 1.25 (outside the 20% band -> high).
        let t = mk(vec![75.0, 100.0, 100.0, 125.0]);
        let derived = derive_features(&t).unwrap();
        let ratios = derived.column_by_name(COMP).unwrap();
        let spec = discretizations().into_iter().find(|d| d.column == COMP).unwrap();
        assert_eq!(spec.level_of(ratios[3]), 2, "25% above average is high");
        assert_eq!(spec.level_of(ratios[1]), 1, "exactly average is medium");
        assert_eq!(spec.level_of(ratios[0]), 0, "25% below average is low");
    }

    #[test]
    fn unknown_codes_are_rejected() {
        let mut names: Vec<String> = RETENTION_FEATURES.iter().map(|s| s.to_string()).collect();
        let mk = |org: f64, pos: f64| {
            vec![
                vec![org],
                vec![pos],
                vec![50_000.0],
                vec![24.0],
                vec![12.0],
                vec![3.0],
                vec![0.0],
                vec![1.0],
            ]
        };
        let t = FeatureTable::new(names.clone(), mk(34.0, 5.0)).unwrap();
        assert!(derive_features(&t).is_err());
        let t = FeatureTable::new(names.clone(), mk(10.0, 13.0)).unwrap();
        assert!(derive_features(&t).is_err());
        // Columns are found by name, so order does not matter.
        names.swap(0, 1);
        let t = FeatureTable::new(names, mk(5.0, 33.0)).unwrap();
        assert!(derive_features(&t).is_ok());
    }

    #[test]
    fn mid_career_window_is_strict_on_both_ends() {
        let mk = |msp: f64| {
            FeatureTable::new(
                RETENTION_FEATURES.iter().map(|s| s.to_string()).collect(),
                vec![
                    vec![1.0],  // org 1: high attrition
                    vec![12.0], // established: no promotion-lag leaf applies
                    vec![90_000.0],
                    vec![240.0],
                    vec![msp],
                    vec![3.0],  // medium eval
                    vec![0.0],  // flat slope
                    vec![0.0],
                ],
            )
            .unwrap()
        };
        let label = |msp: f64| {
            synthesize_from_table(&mk(msp), GranularityLevel::Level1, &NoiseConfig::noiseless(0))
                .unwrap()
                .e[0]
                .unwrap()
        };
        let space = scheme_at(GranularityLevel::Level1).explanations;
        let mcc = (0..space.len())
            .find(|&e| space.text(e) == Some("Mid-Career Crisis"))
            .unwrap();
        assert_eq!(label(121.0), mcc);
        assert_eq!(label(179.0), mcc);
        assert_ne!(label(120.0), mcc);
        assert_ne!(label(180.0), mcc);
    }

    #[test]
    fn sampler_is_deterministic_and_validates() {
        let a = sample_retention(100, 9).unwrap();
        let b = sample_retention(100, 9).unwrap();
        assert_eq!(a, b);
        assert!(sample_retention(0, 1).is_err());
        let one = sample_retention(1, 2).unwrap();
        assert_eq!(one.n_rows(), 1);
        derive_features(&one).unwrap();
    }

    #[test]
    fn all_level1_explanations_present_in_a_survey_sized_sample() {
        let data =
            synthesize_dataset(9999, 1, GranularityLevel::Level1, &NoiseConfig::noiseless(0)).unwrap();
        let mut seen = vec![false; 9];
        for e in data.e.iter().flatten() {
            seen[*e] = true;
        }
        assert!(seen.iter().all(|&s| s), "missing level-1 classes: {seen:?}");
    }

    #[test]
    fn every_leaf_frequency_at_least_half_a_percent() {
        let data =
            synthesize_dataset(10_000, 3, GranularityLevel::Level3, &NoiseConfig::noiseless(0)).unwrap();
        let mut counts = vec![0usize; 26];
        for e in data.e.iter().flatten() {
            counts[*e] += 1;
        }
        let space = scheme_at(GranularityLevel::Level3).explanations;
        let mut failures = Vec::new();
        for (e, &c) in counts.iter().enumerate().take(25) {
            let freq = c as f64 / data.n_rows() as f64;
            if freq < 0.005 {
                failures.push(format!("{e} ({}): {freq:.4}", space.text(e).unwrap()));
            }
        }
        assert!(failures.is_empty(), "rare leaves:\n{}", failures.join("\n"));
    }
}
