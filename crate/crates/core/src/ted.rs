//! The Cartesian trainer: decisions and explanations fold into one
//! multiclass label, any base classifier learns it, and predictions decode
//! back into consistent (decision, explanation) pairs.
//!
//! Because every explanation implies its decision, the occupied label pairs
//! are exactly the explanation catalog, so the class index IS the
//! explanation index and consistency of decoded pairs is structural. A
//! dataset with free-floating (Y, E) combinations would instead enumerate
//! its observed support; that generality is not needed here.
//!
//! [`impute_explanations`] handles partially explained training sets: one
//! explanation predictor per decision class is trained on the explained
//! rows with that decision and fills in the rest, after which the ordinary
//! trainer applies unchanged.

use std::path::Path;

use crate::classifiers::{self, BaseModel, ClassifierSpec, FittedModel};
use crate::dataset::{FeatureTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::rules::ExplanationSpace;

/// Bijection between occupied (decision, explanation) pairs and dense class
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianCodec {
    space: ExplanationSpace,
}

impl CartesianCodec {
    pub fn new(space: ExplanationSpace) -> Self {
        Self { space }
    }

    pub fn n_classes(&self) -> usize {
        self.space.len()
    }

    pub fn space(&self) -> &ExplanationSpace {
        &self.space
    }

    /// Class index of a (decision, explanation) pair; errors when the pair
    /// is inconsistent or unknown.
    pub fn encode(&self, y: bool, e: usize) -> Result<usize> {
        match self.space.e_to_y(e) {
            None => Err(Error::Data(format!("explanation index {e} out of range"))),
            Some(ey) if ey != y => Err(Error::Data(format!(
                "explanation {e} implies y={ey}, got y={y}"
            ))),
            Some(_) => Ok(e),
        }
    }

    /// Pair encoded by a class index.
    pub fn decode(&self, class: usize) -> Result<(bool, usize)> {
        self.space
            .e_to_y(class)
            .map(|y| (y, class))
            .ok_or_else(|| Error::Data(format!("class index {class} out of range")))
    }
}

/// A fitted Cartesian model: base classifier over pair classes plus codec.
#[derive(Debug, Clone, PartialEq)]
pub struct TedModel {
    model: FittedModel,
    codec: CartesianCodec,
}

impl TedModel {
    pub fn codec(&self) -> &CartesianCodec {
        &self.codec
    }

    pub fn base_model(&self) -> &FittedModel {
        &self.model
    }

    /// Predict consistent (decision, explanation) pairs for every row.
    pub fn predict(&self, x: &FeatureTable) -> Result<Vec<(bool, usize)>> {
        self.model
            .predict(x)?
            .into_iter()
            .map(|c| self.codec.decode(c))
            .collect()
    }
}

/// Fit a Cartesian model. Every example must carry an explanation; impute
/// first when some are missing.
pub fn ted_fit(spec: &ClassifierSpec, data: &LabeledDataset) -> Result<TedModel> {
    let codec = CartesianCodec::new(data.space.clone());
    let mut classes = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        let e = data.e[i].ok_or_else(|| {
            Error::Data(format!("row {i} has no explanation; impute before fitting"))
        })?;
        classes.push(codec.encode(data.y[i], e)?);
    }
    let model = classifiers::fit(spec, &data.features, &classes, codec.n_classes())?;
    Ok(TedModel { model, codec })
}

/// One imputed explanation, with the imputer's confidence (vote share or
/// softmax probability). `row` indexes the dataset passed for imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationRecord {
    pub row: usize,
    pub y: bool,
    pub imputed_e: usize,
    pub confidence: f64,
}

/// Write imputation records as CSV: row id, decision, imputed explanation,
/// confidence.
pub fn write_imputation_csv(records: &[ImputationRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "y", "imputed_e", "confidence"])?;
    for r in records {
        w.write_record(&[
            r.row.to_string(),
            if r.y { "1".into() } else { "0".to_string() },
            r.imputed_e.to_string(),
            format!("{:.6}", r.confidence),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fill in missing explanations and return the completed dataset plus the
/// imputation report. Present explanations are never altered.
///
/// Default mode trains one explanation predictor per decision class on the
/// explained rows with that decision, exploiting that the decision is known
/// for every row and restricts the candidate explanations. With
/// `append_y`, a single predictor instead sees the decision as an extra
/// input column; if its top prediction is inconsistent with a row's known
/// decision, that row falls back to the majority explanation among donors
/// with the same decision.
pub fn impute_explanations(
    spec: &ClassifierSpec,
    data: &LabeledDataset,
    append_y: bool,
) -> Result<(LabeledDataset, Vec<ImputationRecord>)> {
    let missing: Vec<usize> = (0..data.n_rows()).filter(|&i| data.e[i].is_none()).collect();
    if missing.is_empty() {
        return Ok((data.clone(), Vec::new()));
    }
    for &y in &[false, true] {
        let needs = missing.iter().any(|&i| data.y[i] == y);
        let has_donor = (0..data.n_rows()).any(|i| data.y[i] == y && data.e[i].is_some());
        if needs && !has_donor {
            return Err(Error::MissingDonor { y: u8::from(y) });
        }
    }

    let mut e_full = data.e.clone();
    let mut records = Vec::with_capacity(missing.len());
    if append_y {
        impute_joint(spec, data, &missing, &mut e_full, &mut records)?;
    } else {
        for y in [false, true] {
            let targets: Vec<usize> = missing.iter().copied().filter(|&i| data.y[i] == y).collect();
            if targets.is_empty() {
                continue;
            }
            impute_per_decision(spec, data, y, &targets, &mut e_full, &mut records)?;
        }
        records.sort_by_key(|r| r.row);
    }

    let out = LabeledDataset::new(data.features.clone(), data.y.clone(), e_full, data.space.clone())?;
    Ok((out, records))
}

/// Dense relabeling of donor explanations so the sub-model sees classes
/// 0..n without gaps.
struct SubClasses {
    to_sub: Vec<Option<usize>>,
    from_sub: Vec<usize>,
}

impl SubClasses {
    fn new(donor_es: impl Iterator<Item = usize>, space_len: usize) -> Self {
        let mut to_sub = vec![None; space_len];
        let mut from_sub = Vec::new();
        for e in donor_es {
            if to_sub[e].is_none() {
                to_sub[e] = Some(from_sub.len());
                from_sub.push(e);
            }
        }
        Self { to_sub, from_sub }
    }
}

fn impute_per_decision(
    spec: &ClassifierSpec,
    data: &LabeledDataset,
    y: bool,
    targets: &[usize],
    e_full: &mut [Option<usize>],
    records: &mut Vec<ImputationRecord>,
) -> Result<()> {
    let donors: Vec<usize> = (0..data.n_rows())
        .filter(|&i| data.y[i] == y && data.e[i].is_some())
        .collect();
    let sub = SubClasses::new(
        donors.iter().map(|&i| data.e[i].expect("donor has e")),
        data.space.len(),
    );
    let donor_x = data.features.select_rows(&donors);
    let donor_labels: Vec<usize> = donors
        .iter()
        .map(|&i| sub.to_sub[data.e[i].unwrap()].unwrap())
        .collect();
    let model = classifiers::fit(spec, &donor_x, &donor_labels, sub.from_sub.len())?;
    let target_x = data.features.select_rows(targets);
    for (&row, (cls, confidence)) in targets.iter().zip(model.predict_scored(&target_x)?) {
        let e = sub.from_sub[cls];
        e_full[row] = Some(e);
        records.push(ImputationRecord { row, y, imputed_e: e, confidence });
    }
    Ok(())
}

fn impute_joint(
    spec: &ClassifierSpec,
    data: &LabeledDataset,
    missing: &[usize],
    e_full: &mut [Option<usize>],
    records: &mut Vec<ImputationRecord>,
) -> Result<()> {
    let donors: Vec<usize> = (0..data.n_rows()).filter(|&i| data.e[i].is_some()).collect();
    let sub = SubClasses::new(
        donors.iter().map(|&i| data.e[i].expect("donor has e")),
        data.space.len(),
    );
    // Majority donor explanation per decision, for inconsistent fallbacks.
    let mut counts = vec![0usize; data.space.len()];
    for &i in &donors {
        counts[data.e[i].unwrap()] += 1;
    }
    let majority = |y: bool| -> usize {
        let mut best: Option<(usize, usize)> = None;
        for (e, &c) in counts.iter().enumerate() {
            if c > 0 && data.space.e_to_y(e) == Some(y) && best.map_or(true, |(_, bc)| c > bc) {
                best = Some((e, c));
            }
        }
        best.expect("donor existence checked upstream").0
    };

    let with_y = |rows: &[usize]| -> Result<FeatureTable> {
        let base = data.features.select_rows(rows);
        let mut names = base.names().to_vec();
        let mut cols = base.columns().to_vec();
        names.push("__decision".into());
        cols.push(rows.iter().map(|&i| f64::from(data.y[i])).collect());
        FeatureTable::new(names, cols)
    };

    let donor_x = with_y(&donors)?;
    let donor_labels: Vec<usize> = donors
        .iter()
        .map(|&i| sub.to_sub[data.e[i].unwrap()].unwrap())
        .collect();
    let model = classifiers::fit(spec, &donor_x, &donor_labels, sub.from_sub.len())?;
    let target_x = with_y(missing)?;
    for (&row, (cls, confidence)) in missing.iter().zip(model.predict_scored(&target_x)?) {
        let mut e = sub.from_sub[cls];
        if data.space.e_to_y(e) != Some(data.y[row]) {
            e = majority(data.y[row]);
        }
        e_full[row] = Some(e);
        records.push(ImputationRecord { row, y: data.y[row], imputed_e: e, confidence });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fico::{self, FicoExplanationConfig};
    use crate::noise::NoiseConfig;
    use crate::retention::{self, GranularityLevel};

    fn fico_data(n: usize, seed: u64) -> LabeledDataset {
        fico::synthesize_dataset(n, seed, &FicoExplanationConfig::base(), &NoiseConfig::noiseless(0))
            .unwrap()
    }

    #[test]
    fn codec_roundtrips_every_class_of_the_shipped_spaces() {
        let spaces = [
            fico::base_scheme().scheme.explanations,
            fico::expanded_scheme(&FicoExplanationConfig::new(3, true)).unwrap().scheme.explanations,
            retention::scheme_at(GranularityLevel::Level3).explanations,
        ];
        for space in spaces {
            let codec = CartesianCodec::new(space);
            for class in 0..codec.n_classes() {
                let (y, e) = codec.decode(class).unwrap();
                assert_eq!(codec.encode(y, e).unwrap(), class);
            }
            assert!(codec.decode(codec.n_classes()).is_err());
        }
    }

    #[test]
    fn fico_base_pairs_map_to_indices_in_catalog_order() {
        let codec = CartesianCodec::new(fico_data(10, 1).space);
        assert_eq!(codec.n_classes(), 9);
        assert_eq!(codec.encode(true, 0).unwrap(), 0);
        assert_eq!(codec.encode(false, 8).unwrap(), 8);
    }

    #[test]
    fn inconsistent_pairs_are_rejected() {
        let codec = CartesianCodec::new(fico_data(10, 1).space);
        // Explanation 2 is a denial; approving with it is inconsistent.
        assert!(codec.encode(true, 2).is_err());
        assert!(codec.encode(false, 0).is_err());
        assert!(codec.encode(true, 99).is_err());
    }

    #[test]
    fn ted_fit_requires_every_explanation() {
        let mut data = fico_data(50, 2);
        data.e[7] = None;
        let err = ted_fit(&ClassifierSpec::decision_tree(1, 0), &data).unwrap_err();
        assert!(err.to_string().contains("row 7"));
    }

    #[test]
    fn memorizing_tree_reproduces_the_rule_labels() {
        let data = fico_data(2000, 3);
        let model = ted_fit(&ClassifierSpec::decision_tree(1, 0), &data).unwrap();
        let preds = model.predict(&data.features).unwrap();
        for i in 0..data.n_rows() {
            assert_eq!(preds[i], (data.y[i], data.e[i].unwrap()), "row {i}");
        }
    }

    #[test]
    fn predictions_are_always_consistent_pairs() {
        let data = fico_data(3000, 4);
        let model = ted_fit(&ClassifierSpec::random_forest(5, 1), &data).unwrap();
        let probe = crate::dataset::sample_fico_like(3000, 99).unwrap();
        for (y, e) in model.predict(&probe).unwrap() {
            assert_eq!(data.space.e_to_y(e), Some(y));
        }
        assert!(model.predict(&probe.select_rows(&[])).unwrap().is_empty());
    }

    #[test]
    fn single_class_data_predicts_that_pair_everywhere() {
        let data = fico_data(400, 5);
        // Keep only high-debt denials.
        let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| data.e[i] == Some(2)).collect();
        assert!(rows.len() > 10);
        let subset = data.select_rows(&rows);
        let model = ted_fit(&ClassifierSpec::random_forest(1, 2), &subset).unwrap();
        let probe = crate::dataset::sample_fico_like(100, 7).unwrap();
        assert!(model.predict(&probe).unwrap().iter().all(|&p| p == (false, 2)));
    }

    #[test]
    fn same_seed_gives_identical_predictions() {
        let data = fico_data(1000, 6);
        let spec = ClassifierSpec::random_forest(3, 42);
        let probe = crate::dataset::sample_fico_like(500, 1).unwrap();
        let a = ted_fit(&spec, &data).unwrap().predict(&probe).unwrap();
        let b = ted_fit(&spec, &data).unwrap().predict(&probe).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn imputation_with_nothing_missing_is_identity() {
        let data = fico_data(300, 8);
        let (out, records) =
            impute_explanations(&ClassifierSpec::random_forest(1, 0), &data, false).unwrap();
        assert_eq!(out, data);
        assert!(records.is_empty());
    }

    #[test]
    fn single_donor_class_imputes_that_explanation() {
        let data = fico_data(2000, 9);
        // Blank the explanation of every approval that used rule 1; the
        // remaining labeled approvals all share explanation 1.
        let mut e = data.e.clone();
        let mut blanked = 0;
        for i in 0..data.n_rows() {
            if data.y[i] && data.e[i] == Some(0) {
                e[i] = None;
                blanked += 1;
            }
        }
        assert!(blanked > 0);
        let masked =
            LabeledDataset::new(data.features.clone(), data.y.clone(), e, data.space.clone()).unwrap();
        let (out, records) =
            impute_explanations(&ClassifierSpec::random_forest(1, 1), &masked, false).unwrap();
        assert_eq!(records.len(), blanked);
        for r in &records {
            assert!(r.y);
            assert_eq!(r.imputed_e, 1, "only explanation 1 had labeled approvals");
            assert!(r.confidence > 0.0);
        }
        // Given explanations were never altered.
        for i in 0..data.n_rows() {
            if masked.e[i].is_some() {
                assert_eq!(out.e[i], masked.e[i]);
            }
        }
        assert!(out.fully_explained());
    }

    #[test]
    fn missing_donor_is_a_hard_error_naming_the_decision() {
        let data = fico_data(500, 10);
        let mut e = data.e.clone();
        for i in 0..data.n_rows() {
            if data.y[i] {
                e[i] = None; // every approval unexplained: no donor for y=1
            }
        }
        let masked =
            LabeledDataset::new(data.features.clone(), data.y.clone(), e, data.space.clone()).unwrap();
        match impute_explanations(&ClassifierSpec::random_forest(1, 0), &masked, false) {
            Err(Error::MissingDonor { y }) => assert_eq!(y, 1),
            other => panic!("expected MissingDonor, got {other:?}"),
        }
    }

    #[test]
    fn appended_decision_variant_stays_consistent() {
        let data = fico_data(1500, 11);
        let mut e = data.e.clone();
        for (i, slot) in e.iter_mut().enumerate() {
            if i % 3 == 0 {
                *slot = None;
            }
        }
        let masked =
            LabeledDataset::new(data.features.clone(), data.y.clone(), e, data.space.clone()).unwrap();
        let (out, records) =
            impute_explanations(&ClassifierSpec::random_forest(1, 5), &masked, true).unwrap();
        assert!(out.fully_explained());
        for r in &records {
            assert_eq!(out.space.e_to_y(r.imputed_e), Some(r.y));
        }
    }

    #[test]
    fn imputation_report_roundtrips_as_csv() {
        let records = vec![
            ImputationRecord { row: 3, y: true, imputed_e: 1, confidence: 0.9 },
            ImputationRecord { row: 8, y: false, imputed_e: 4, confidence: 0.55 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imputation.csv");
        write_imputation_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("row,y,imputed_e,confidence"));
        assert!(text.contains("3,1,1,0.900000"));
    }
}
