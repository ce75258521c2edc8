use tedc::classifiers::ClassifierSpec;
use tedc::dataset::LabeledDataset;
use tedc::fico::{self, FicoExplanationConfig};
use tedc::noise::NoiseConfig;
use tedc::seed;
use tedc::ted;
use rand::Rng;

#[test]
fn imputer_quality_by_leaf_size() {
    let data = fico::synthesize_dataset(8000, 1, &FicoExplanationConfig::base(), &NoiseConfig::noiseless(0)).unwrap();
    // Mask 90% of explanations.
    let mut e = data.e.clone();
    let mut rng = seed::rng(5, "mask", 0);
    let mut blanked = vec![];
    for i in 0..data.n_rows() {
        if rng.gen::<f64>() < 0.9 { blanked.push(i); e[i] = None; }
    }
    let masked = LabeledDataset::new(data.features.clone(), data.y.clone(), e, data.space.clone()).unwrap();
    for msl in [1usize, 5, 15, 30, 45] {
        let (full, _) = ted::impute_explanations(&ClassifierSpec::random_forest(msl, 7), &masked, false).unwrap();
        let correct = blanked.iter().filter(|&&i| full.e[i] == data.e[i]).count();
        println!("msl={msl:>2}: imputed-label accuracy {:.4} over {} rows", correct as f64 / blanked.len() as f64, blanked.len());
    }
}
