//! CART-style decision tree: Gini impurity, exhaustive threshold search over
//! feature midpoints, `min_samples_leaf` pruning at split time.
//!
//! Impurity ties break toward the lowest feature index, then the lowest
//! threshold; leaf ties toward the lowest class index. Fitting is fully
//! deterministic given the data, parameters, and (for subsampled splits) the
//! node RNG seed, and does not depend on row order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;

use super::{MaxFeatures, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { class: u16, fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
    n_features: usize,
    params: TreeParams,
}

struct Builder<'a> {
    x: &'a FeatureTable,
    labels: &'a [u16],
    weights: Option<&'a [u32]>,
    min_leaf: u64,
    n_candidates: usize,
    rng: Option<ChaCha8Rng>,
    rows: Vec<u32>,
    nodes: Vec<Node>,
    // Reused scratch buffers.
    gathered: Vec<(f64, u16, u32)>,
    counts_total: Vec<u32>,
    counts_left: Vec<u32>,
    feature_pool: Vec<u32>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> Builder<'a> {
    /// Process one node over `rows[lo..hi]`, writing into `slot`.
    /// Returns child ranges to enqueue (left processed first).
    fn build(&mut self, lo: usize, hi: usize, slot: usize) -> Option<(usize, usize, usize, usize)> {
        // Node statistics.
        self.counts_total.iter_mut().for_each(|c| *c = 0);
        for i in lo..hi {
            let row = self.rows[i];
            self.counts_total[self.labels[row as usize] as usize] += self.weight(row);
        }
        let w_total: u64 = self.counts_total.iter().map(|&c| c as u64).sum();
        let n_nonzero = self.counts_total.iter().filter(|&&c| c > 0).count();

        if n_nonzero <= 1 || w_total < 2 * self.min_leaf {
            self.write_leaf(slot, w_total);
            return None;
        }

        let best = self.find_best_split(lo, hi, w_total);
        let Some(best) = best else {
            self.write_leaf(slot, w_total);
            return None;
        };

        // Partition rows in place: `value <= threshold` goes left.
        let col = self.x.column(best.feature);
        let (mut i, mut j) = (lo, hi);
        while i < j {
            if col[self.rows[i] as usize] <= best.threshold {
                i += 1;
            } else {
                j -= 1;
                self.rows.swap(i, j);
            }
        }
        debug_assert!(i > lo && i < hi, "split must separate the node");

        let left_slot = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0, fraction: 0.0 });
        let right_slot = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0, fraction: 0.0 });
        self.nodes[slot] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: left_slot as u32,
            right: right_slot as u32,
        };
        Some((lo, i, i, hi))
    }

    fn weight(&self, row: u32) -> u32 {
        match &self.weights {
            Some(w) => w[row as usize],
            None => 1,
        }
    }

    fn write_leaf(&mut self, slot: usize, w_total: u64) {
        let mut best_class = 0usize;
        let mut best_count = 0u32;
        for (c, &count) in self.counts_total.iter().enumerate() {
            if count > best_count {
                best_count = count;
                best_class = c;
            }
        }
        self.nodes[slot] = Node::Leaf {
            class: best_class as u16,
            fraction: if w_total == 0 { 0.0 } else { best_count as f64 / w_total as f64 },
        };
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        if self.n_candidates >= d {
            return (0..d).collect();
        }
        let rng = self.rng.as_mut().expect("subsampled splits need a seeded RNG");
        self.feature_pool.clear();
        self.feature_pool.extend(0..d as u32);
        for i in 0..self.n_candidates {
            let j = rng.gen_range(i..d);
            self.feature_pool.swap(i, j);
        }
        let mut picked: Vec<usize> =
            self.feature_pool[..self.n_candidates].iter().map(|&f| f as usize).collect();
        // Ascending order keeps the lowest-feature tie-break meaningful.
        picked.sort_unstable();
        picked
    }

    fn find_best_split(&mut self, lo: usize, hi: usize, w_total: u64) -> Option<BestSplit> {
        let features = self.candidate_features();
        let mut best: Option<BestSplit> = None;

        for f in features {
            let col = self.x.column(f);
            self.gathered.clear();
            for &r in &self.rows[lo..hi] {
                self.gathered.push((col[r as usize], self.labels[r as usize], self.weight(r)));
            }
            self.gathered.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            self.counts_left.iter_mut().for_each(|c| *c = 0);
            let mut w_left = 0u64;
            let mut ssq_left = 0.0f64;
            // Right side starts as the whole node.
            let mut ssq_right = self
                .counts_total
                .iter()
                .map(|&c| (c as f64) * (c as f64))
                .sum::<f64>();

            let n = self.gathered.len();
            for i in 0..n - 1 {
                let (v, label, w) = self.gathered[i];
                let (c, wf) = (label as usize, w as f64);
                let lc = self.counts_left[c] as f64;
                let rc = self.counts_total[c] as f64 - lc;
                ssq_left += wf * (2.0 * lc + wf);
                ssq_right += wf * (wf - 2.0 * rc);
                self.counts_left[c] += w;
                w_left += w as u64;

                let next = self.gathered[i + 1].0;
                if v == next {
                    continue;
                }
                let w_right = w_total - w_left;
                if w_left < self.min_leaf || w_right < self.min_leaf {
                    continue;
                }
                let score = ssq_left / w_left as f64 + ssq_right / w_right as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut mid = v + (next - v) / 2.0;
                    if !(mid > v && mid < next) {
                        mid = v; // adjacent floats: keep the boundary exact
                    }
                    best = Some(BestSplit { score, feature: f, threshold: mid });
                }
            }
        }
        best
    }
}

impl DecisionTree {
    /// Fit with unit weights and every feature considered at each split.
    pub fn fit(
        x: &FeatureTable,
        labels: &[u16],
        n_classes: usize,
        params: TreeParams,
        _seed: u64,
    ) -> Self {
        Self::fit_weighted(x, labels, n_classes, params, MaxFeatures::All, None, 0)
    }

    /// Fit with optional per-row weights (bootstrap counts) and per-split
    /// feature subsampling. Rows with zero weight are ignored.
    pub fn fit_weighted(
        x: &FeatureTable,
        labels: &[u16],
        n_classes: usize,
        params: TreeParams,
        max_features: MaxFeatures,
        weights: Option<&[u32]>,
        node_seed: u64,
    ) -> Self {
        let rows: Vec<u32> = (0..x.n_rows() as u32)
            .filter(|&r| weights.map_or(true, |w| w[r as usize] > 0))
            .collect();
        let n_candidates = max_features.resolve(x.n_cols());
        let mut b = Builder {
            x,
            labels,
            weights,
            min_leaf: params.min_samples_leaf as u64,
            n_candidates,
            rng: (n_candidates < x.n_cols()).then(|| ChaCha8Rng::seed_from_u64(node_seed)),
            rows,
            nodes: vec![Node::Leaf { class: 0, fraction: 0.0 }],
            gathered: Vec::new(),
            counts_total: vec![0; n_classes],
            counts_left: vec![0; n_classes],
            feature_pool: Vec::new(),
        };
        // Depth-first, left child first, so RNG draws follow a fixed order.
        let n_active = b.rows.len();
        let mut stack = vec![(0usize, n_active, 0usize)];
        while let Some((lo, hi, slot)) = stack.pop() {
            if let Some((llo, lhi, rlo, rhi)) = b.build(lo, hi, slot) {
                let (left_slot, right_slot) = match b.nodes[slot] {
                    Node::Split { left, right, .. } => (left as usize, right as usize),
                    Node::Leaf { .. } => unreachable!(),
                };
                stack.push((rlo, rhi, right_slot));
                stack.push((llo, lhi, left_slot));
            }
        }
        DecisionTree { nodes: b.nodes, n_classes, n_features: x.n_cols(), params }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn leaf_for(&self, x: &FeatureTable, row: usize) -> (u16, f64) {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Split { feature, threshold, left, right } => {
                    node = if x.column(feature as usize)[row] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { class, fraction } => return (class, fraction),
            }
        }
    }

    pub fn predict(&self, x: &FeatureTable) -> Vec<usize> {
        (0..x.n_rows()).map(|r| self.leaf_for(x, r).0 as usize).collect()
    }

    /// Class plus the class's weighted fraction in the leaf.
    pub fn predict_scored(&self, x: &FeatureTable) -> Vec<(usize, f64)> {
        (0..x.n_rows())
            .map(|r| {
                let (c, f) = self.leaf_for(x, r);
                (c as usize, f)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: Vec<Vec<f64>>) -> FeatureTable {
        let names = (0..cols.len()).map(|i| format!("f{i}")).collect();
        FeatureTable::new(names, cols).unwrap()
    }

    #[test]
    fn memorizes_training_data_without_duplicate_conflicts() {
        let x = table(vec![vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]]);
        let labels: Vec<u16> = vec![0, 1, 0, 2, 1, 0, 2, 2];
        let tree = DecisionTree::fit(&x, &labels, 3, TreeParams { min_samples_leaf: 1 }, 0);
        let got: Vec<usize> = tree.predict(&x);
        assert_eq!(got, labels.iter().map(|&l| l as usize).collect::<Vec<_>>());
    }

    #[test]
    fn respects_min_samples_leaf() {
        let x = table(vec![(0..20).map(f64::from).collect()]);
        let labels: Vec<u16> = (0..20).map(|i| (i % 2) as u16).collect();
        let tree = DecisionTree::fit(&x, &labels, 2, TreeParams { min_samples_leaf: 8 }, 0);
        // Any split must leave >= 8 rows per side: at most one split of 20.
        assert!(tree.n_nodes() <= 3, "{} nodes", tree.n_nodes());
    }

    #[test]
    fn tie_breaks_to_lowest_feature_then_lowest_threshold() {
        // Two identical features produce identical best scores; feature 0
        // must win. Within feature 0, the label pattern 0 0 1 1 0 0 makes
        // the boundaries at 1.5 and 3.5 score equally; 1.5 must win.
        let col = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let x = table(vec![col.clone(), col]);
        let labels: Vec<u16> = vec![0, 0, 1, 1, 0, 0];
        let tree = DecisionTree::fit(&x, &labels, 2, TreeParams { min_samples_leaf: 1 }, 0);
        match tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 1.5);
            }
            Node::Leaf { .. } => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn row_order_does_not_change_the_tree() {
        let x = crate::dataset::sample_fico_like(400, 3).unwrap();
        let labels: Vec<u16> = (0..400).map(|i| (i % 5) as u16).collect();
        let tree_a = DecisionTree::fit(&x, &labels, 5, TreeParams { min_samples_leaf: 2 }, 0);

        let perm: Vec<usize> = (0..400).rev().collect();
        let x_perm = x.select_rows(&perm);
        let labels_perm: Vec<u16> = perm.iter().map(|&i| labels[i]).collect();
        let tree_b = DecisionTree::fit(&x_perm, &labels_perm, 5, TreeParams { min_samples_leaf: 2 }, 0);

        let probe = crate::dataset::sample_fico_like(200, 9).unwrap();
        assert_eq!(tree_a.predict(&probe), tree_b.predict(&probe));
    }

    #[test]
    fn zero_weight_rows_are_invisible()
    {
        let x = table(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let labels: Vec<u16> = vec![0, 0, 1, 1];
        // Masking rows 2-3 away leaves a pure class-0 problem.
        let weights = vec![1, 1, 0, 0];
        let tree = DecisionTree::fit_weighted(
            &x,
            &labels,
            2,
            TreeParams { min_samples_leaf: 1 },
            MaxFeatures::All,
            Some(&weights),
            0,
        );
        assert_eq!(tree.predict(&x), vec![0, 0, 0, 0]);
    }

    #[test]
    fn leaf_fraction_reflects_class_purity() {
        let x = table(vec![vec![0.0, 0.0, 0.0, 0.0]]);
        let labels: Vec<u16> = vec![0, 0, 0, 1];
        let tree = DecisionTree::fit(&x, &labels, 2, TreeParams { min_samples_leaf: 1 }, 0);
        let scored = tree.predict_scored(&x);
        for (class, fraction) in scored {
            assert_eq!(class, 0);
            assert!((fraction - 0.75).abs() < 1e-12);
        }
    }
}
