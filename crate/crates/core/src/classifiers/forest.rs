//! Bagged random forest: bootstrap-resampled CART trees with per-split
//! feature subsampling and majority voting.
//!
//! Each tree gets its own seed-derived bootstrap and node RNG, so fits are
//! reproducible and trees can be built in parallel. Vote ties break toward
//! the lowest class index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::exec;
use crate::seed;

use super::{DecisionTree, ForestParams, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
    n_features: usize,
    params: ForestParams,
}

impl RandomForest {
    pub fn fit(
        x: &FeatureTable,
        labels: &[u16],
        n_classes: usize,
        params: ForestParams,
        seed: u64,
    ) -> Self {
        let n = x.n_rows();
        let tree_params = TreeParams { min_samples_leaf: params.min_samples_leaf };
        let trees = exec::map_indexed(params.n_trees, |t| {
            let mut rng = seed::rng(seed, "bootstrap", t as u64);
            let mut weights = vec![0u32; n];
            for _ in 0..n {
                weights[rng.gen_range(0..n)] += 1;
            }
            let node_seed = seed::derive(seed, "tree_nodes", t as u64);
            DecisionTree::fit_weighted(
                x,
                labels,
                n_classes,
                tree_params,
                params.max_features,
                Some(&weights),
                node_seed,
            )
        });
        RandomForest { trees, n_classes, n_features: x.n_cols(), params }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Per-tree predictions, one inner vector per tree.
    pub fn tree_predictions(&self, x: &FeatureTable) -> Vec<Vec<usize>> {
        exec::map_indexed(self.trees.len(), |t| self.trees[t].predict(x))
    }

    fn vote(&self, x: &FeatureTable) -> Vec<(usize, f64)> {
        let per_tree = self.tree_predictions(x);
        let mut out = Vec::with_capacity(x.n_rows());
        let mut counts = vec![0u32; self.n_classes];
        for row in 0..x.n_rows() {
            counts.iter_mut().for_each(|c| *c = 0);
            for preds in &per_tree {
                counts[preds[row]] += 1;
            }
            let mut best = 0usize;
            let mut best_votes = 0u32;
            for (c, &v) in counts.iter().enumerate() {
                if v > best_votes {
                    best_votes = v;
                    best = c;
                }
            }
            out.push((best, best_votes as f64 / self.trees.len() as f64));
        }
        out
    }

    pub fn predict(&self, x: &FeatureTable) -> Vec<usize> {
        self.vote(x).into_iter().map(|(c, _)| c).collect()
    }

    /// Majority class plus its vote share.
    pub fn predict_scored(&self, x: &FeatureTable) -> Vec<(usize, f64)> {
        self.vote(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::MaxFeatures;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (FeatureTable, Vec<u16>) {
        let x = crate::dataset::sample_fico_like(100, 2).unwrap();
        let labels: Vec<u16> = (0..100).map(|i| (i % 3) as u16).collect();
        (x, labels)
    }

    #[test]
    fn forest_prediction_is_the_majority_of_its_trees() {
        let (x, labels) = toy();
        let params = ForestParams { n_trees: 15, min_samples_leaf: 2, max_features: MaxFeatures::Sqrt };
        let forest = RandomForest::fit(&x, &labels, 3, params, 7);
        let per_tree = forest.tree_predictions(&x);
        let voted = forest.predict(&x);
        for row in 0..x.n_rows() {
            let mut counts = [0u32; 3];
            for preds in &per_tree {
                counts[preds[row]] += 1;
            }
            let max = *counts.iter().max().unwrap();
            let expected = counts.iter().position(|&c| c == max).unwrap();
            assert_eq!(voted[row], expected, "row {row}: counts {counts:?}");
        }
    }

    #[test]
    fn single_tree_full_features_equals_the_plain_tree_on_its_bootstrap() {
        let (x, labels) = toy();
        let params = ForestParams { n_trees: 1, min_samples_leaf: 1, max_features: MaxFeatures::All };
        let forest = RandomForest::fit(&x, &labels, 3, params, 11);

        // Reproduce the forest's bootstrap for tree 0 and fit a bare tree.
        let mut rng = seed::rng(11, "bootstrap", 0);
        let mut weights = vec![0u32; x.n_rows()];
        for _ in 0..x.n_rows() {
            weights[rng.gen_range(0..x.n_rows())] += 1;
        }
        let tree = DecisionTree::fit_weighted(
            &x,
            &labels,
            3,
            TreeParams { min_samples_leaf: 1 },
            MaxFeatures::All,
            Some(&weights),
            seed::derive(11, "tree_nodes", 0),
        );
        let probe = crate::dataset::sample_fico_like(200, 5).unwrap();
        assert_eq!(forest.predict(&probe), tree.predict(&probe));
    }

    #[test]
    fn bootstraps_depend_only_on_seed_and_row_count() {
        let mut a = ChaCha8Rng::seed_from_u64(seed::derive(3, "bootstrap", 0));
        let mut b = ChaCha8Rng::seed_from_u64(seed::derive(3, "bootstrap", 0));
        let draws_a: Vec<u64> = (0..10).map(|_| a.gen_range(0..1000u64)).collect();
        let draws_b: Vec<u64> = (0..10).map(|_| b.gen_range(0..1000u64)).collect();
        assert_eq!(draws_a, draws_b);
    }

    #[test]
    fn vote_share_is_reported() {
        let (x, labels) = toy();
        let params = ForestParams { n_trees: 10, min_samples_leaf: 1, max_features: MaxFeatures::Sqrt };
        let forest = RandomForest::fit(&x, &labels, 3, params, 1);
        for (_, share) in forest.predict_scored(&x) {
            assert!(share > 0.0 && share <= 1.0);
        }
    }
}
