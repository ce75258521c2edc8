//! Label variability: logistic threshold noise and adjacent-level flips,
//! applied to discretized features before rule evaluation so that the noise
//! propagates into both decision and explanation labels.
//!
//! Threshold noise replaces the hard discretization of a value `x` with a
//! random level whose CDF at level `l` is `g((t_l - x) / (tau * sigma))`,
//! where `g` is the logistic function, `t_l` the upper threshold of level
//! `l`, and `sigma` the column's standard deviation. Level-flip noise then
//! moves a level to an adjacent one with total probability `epsilon`
//! (boundary levels have a single neighbor that takes all of it; interior
//! levels split it evenly).
//!
//! Every (row, column) pair draws from its own seed-derived stream, keyed by
//! the column name, so rows can be processed in parallel and adding a column
//! to the noise set never perturbs another column's draws.

use serde::{Deserialize, Serialize};

use crate::dataset::{is_null, FeatureTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::rules::{BoundScheme, DiscretizationSpec, LabelingScheme};
use crate::seed;

use rand::Rng;

/// Noise settings for one synthesis run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Threshold-noise scale; 0 disables threshold noise.
    #[serde(default)]
    pub tau: f64,
    /// Adjacent-level flip probability; 0 disables flips.
    #[serde(default)]
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless(seed: u64) -> Self {
        Self { tau: 0.0, epsilon: 0.0, seed }
    }

    pub fn new(tau: f64, epsilon: f64, seed: u64) -> Self {
        Self { tau, epsilon, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be finite and >= 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must be in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.tau == 0.0 && self.epsilon == 0.0
    }
}

/// Sample standard deviation of one column, used to scale threshold noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub column: String,
    pub sigma: f64,
}

/// Sample standard deviations (over non-null cells) for the columns the
/// scheme discretizes. Errors when a noised column is constant or has fewer
/// than two usable cells.
pub fn column_stats(scheme: &LabelingScheme, table: &FeatureTable) -> Result<Vec<ColumnStats>> {
    scheme
        .discretizations
        .iter()
        .map(|d| {
            let col = table
                .column_by_name(&d.column)
                .ok_or_else(|| Error::Data(format!("missing column `{}`", d.column)))?;
            let vals: Vec<f64> = col.iter().copied().filter(|v| !is_null(*v)).collect();
            if vals.len() < 2 {
                return Err(Error::Data(format!(
                    "column `{}` has fewer than 2 usable cells",
                    d.column
                )));
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sigma = var.sqrt();
            if sigma <= 0.0 {
                return Err(Error::Data(format!(
                    "column `{}` is constant; threshold noise needs sigma > 0",
                    d.column
                )));
            }
            Ok(ColumnStats { column: d.column.clone(), sigma })
        })
        .collect()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// CDF of the noisy level at each level boundary: entry `l` is
/// `Pr(Z <= l | X = x)` for `l` below the top level (the top is always 1).
pub fn threshold_cdf(spec: &DiscretizationSpec, x: f64, tau: f64, sigma: f64) -> Vec<f64> {
    let scale = tau * sigma;
    spec.thresholds.iter().map(|&t| logistic((t - x) / scale)).collect()
}

/// Noisy level of a finite value from one uniform draw via inverse CDF;
/// monotone in `u`.
pub fn noisy_level_from_uniform(
    spec: &DiscretizationSpec,
    x: f64,
    tau: f64,
    sigma: f64,
    u: f64,
) -> usize {
    debug_assert!(tau > 0.0 && sigma > 0.0);
    let cdf = threshold_cdf(spec, x, tau, sigma);
    debug_assert!(cdf.windows(2).all(|w| w[0] <= w[1]), "induced CDF must be monotone");
    cdf.iter().position(|&p| u <= p).unwrap_or(spec.n_levels() - 1)
}

/// Noisy level via a caller-supplied RNG (one uniform draw).
pub fn noisy_discretize<R: Rng>(
    spec: &DiscretizationSpec,
    x: f64,
    tau: f64,
    sigma: f64,
    rng: &mut R,
) -> usize {
    noisy_level_from_uniform(spec, x, tau, sigma, rng.gen::<f64>())
}

/// Adjacent-level flip from one uniform draw. Boundary levels move to their
/// single neighbor with probability `epsilon`; interior levels move to each
/// neighbor with probability `epsilon / 2`.
pub fn perturb_level_from_uniform(
    level: usize,
    n_levels: usize,
    epsilon: f64,
    u: f64,
) -> Result<usize> {
    if n_levels < 2 {
        return Err(Error::Config("level flips need at least 2 levels".into()));
    }
    if level >= n_levels {
        return Err(Error::Data(format!("level {level} out of range 0..{n_levels}")));
    }
    let flipped = if level == 0 {
        if u < epsilon { level + 1 } else { level }
    } else if level == n_levels - 1 {
        if u < epsilon { level - 1 } else { level }
    } else if u < epsilon / 2.0 {
        level - 1
    } else if u < epsilon {
        level + 1
    } else {
        level
    };
    Ok(flipped)
}

/// Adjacent-level flip via a caller-supplied RNG (one uniform draw).
pub fn perturb_level<R: Rng>(
    level: usize,
    n_levels: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    perturb_level_from_uniform(level, n_levels, epsilon, rng.gen::<f64>())
}

/// Discretized levels of row `row` with the configured noise applied.
/// Null cells keep their deterministic null level under threshold noise but
/// still participate in level flips.
pub fn noisy_levels(
    bound: &BoundScheme<'_>,
    table: &FeatureTable,
    row: usize,
    cfg: &NoiseConfig,
    stats: &[ColumnStats],
) -> Result<Vec<Option<usize>>> {
    let specs = &bound.scheme().discretizations;
    let raw = bound.raw_values(table, row);
    let mut levels = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let x = raw[i];
        let key = seed::derive(0, &spec.column, 0);
        let mut level = if cfg.tau > 0.0 && !is_null(x) {
            let mut rng = seed::rng2(cfg.seed, "threshold_noise", row as u64, key);
            Some(noisy_discretize(spec, x, cfg.tau, stats[i].sigma, &mut rng))
        } else {
            spec.level_of_opt(x)
        };
        if cfg.epsilon > 0.0 {
            if let Some(l) = level {
                let mut rng = seed::rng2(cfg.seed, "level_flip", row as u64, key);
                level = Some(perturb_level(l, spec.n_levels(), cfg.epsilon, &mut rng)?);
            }
        }
        levels.push(level);
    }
    Ok(levels)
}

/// Synthesize decision and explanation labels for every row of `table` by
/// applying the noise-free rules to (possibly noised) discretized levels.
/// Returns labels only; pair them with whatever feature table should be
/// stored (the rule table may hold derived columns).
pub fn synthesize_labels(
    scheme: &LabelingScheme,
    table: &FeatureTable,
    cfg: &NoiseConfig,
) -> Result<(Vec<bool>, Vec<usize>)> {
    cfg.validate()?;
    let bound = scheme.bind(table)?;
    let stats: Vec<ColumnStats> = if cfg.tau > 0.0 {
        column_stats(scheme, table)?
    } else {
        Vec::new()
    };

    let labels: Vec<Result<(bool, usize)>> = exec::map_indexed(table.n_rows(), |row| {
        if cfg.is_noiseless() {
            Ok(bound.apply_row(table, row))
        } else {
            let levels = noisy_levels(&bound, table, row, cfg, &stats)?;
            Ok(bound.apply_levels(&levels))
        }
    });
    let mut y = Vec::with_capacity(table.n_rows());
    let mut e = Vec::with_capacity(table.n_rows());
    for l in labels {
        let (yi, ei) = l?;
        y.push(yi);
        e.push(ei);
    }
    Ok((y, e))
}

/// [`synthesize_labels`] packaged as a dataset whose stored features are the
/// rule table itself; only labels feel the noise.
pub fn synthesize_with_noise(
    scheme: &LabelingScheme,
    table: &FeatureTable,
    cfg: &NoiseConfig,
) -> Result<LabeledDataset> {
    let (y, e) = synthesize_labels(scheme, table, cfg)?;
    LabeledDataset::new(
        table.clone(),
        y,
        e.into_iter().map(Some).collect(),
        scheme.explanations.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fico;

    fn debt_spec() -> DiscretizationSpec {
        DiscretizationSpec::new("debt", vec![40.0, 60.0], vec!["low", "medium", "high"])
    }

    #[test]
    fn cdf_at_a_threshold_is_one_half() {
        let cdf = threshold_cdf(&debt_spec(), 40.0, 0.3, 20.0);
        assert!((cdf[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cdf_matches_the_logistic_formula() {
        // x=30, tau=0.3, sigma=20: Pr(Z <= low) = g(10/6).
        let cdf = threshold_cdf(&debt_spec(), 30.0, 0.3, 20.0);
        let oracle = 1.0 / (1.0 + (-10.0f64 / 6.0).exp());
        assert!((cdf[0] - oracle).abs() < 1e-15);
        assert!((cdf[0] - 0.8411).abs() < 5e-5);
    }

    #[test]
    fn tiny_tau_recovers_the_deterministic_level() {
        let spec = debt_spec();
        for x in [5.0, 39.9, 40.1, 55.0, 61.0, 95.0] {
            let exact = spec.level_of(x);
            for u in [0.01, 0.5, 0.99] {
                assert_eq!(noisy_level_from_uniform(&spec, x, 1e-12, 20.0, u), exact, "x={x} u={u}");
            }
        }
    }

    #[test]
    fn noisy_level_is_monotone_in_the_uniform_draw() {
        let spec = debt_spec();
        let mut prev = 0;
        for i in 0..=1000 {
            let u = i as f64 / 1000.0;
            let l = noisy_level_from_uniform(&spec, 50.0, 0.5, 20.0, u);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn threshold_noise_empirical_frequencies_within_three_sigma() {
        let spec = debt_spec();
        let (x, tau, sigma) = (50.0, 0.3, 20.0);
        let cdf = threshold_cdf(&spec, x, tau, sigma);
        let expected = [cdf[0], cdf[1] - cdf[0], 1.0 - cdf[1]];
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for i in 0..n {
            let mut rng = seed::rng(4242, "emp_tau", i as u64);
            counts[noisy_discretize(&spec, x, tau, sigma, &mut rng)] += 1;
        }
        for (l, (&c, &p)) in counts.iter().zip(&expected).enumerate() {
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sd,
                "level {l}: count {c} vs expected {mean:.1} (sd {sd:.1})"
            );
        }
    }

    #[test]
    fn flip_identity_at_zero_epsilon() {
        for l in 0..3 {
            assert_eq!(perturb_level_from_uniform(l, 3, 0.0, 0.999).unwrap(), l);
        }
    }

    #[test]
    fn flip_moves_only_to_adjacent_levels() {
        for l in 0..5usize {
            for i in 0..100 {
                let u = i as f64 / 100.0;
                let f = perturb_level_from_uniform(l, 5, 0.4, u).unwrap();
                assert!(f.abs_diff(l) <= 1);
            }
        }
    }

    #[test]
    fn flip_rejects_out_of_range_level() {
        assert!(perturb_level_from_uniform(3, 3, 0.1, 0.5).is_err());
        assert!(perturb_level_from_uniform(0, 1, 0.1, 0.5).is_err());
    }

    #[test]
    fn flip_empirical_frequencies_within_three_sigma() {
        let n = 100_000usize;
        let eps = 0.2;
        // Boundary level: single neighbor takes all of epsilon.
        let mut moved = 0usize;
        for i in 0..n {
            let mut rng = seed::rng(99, "emp_eps_b", i as u64);
            if perturb_level(0, 3, eps, &mut rng).unwrap() != 0 {
                moved += 1;
            }
        }
        let sd = (n as f64 * eps * (1.0 - eps)).sqrt();
        assert!((moved as f64 - n as f64 * eps).abs() <= 3.0 * sd);

        // Interior level: epsilon/2 each way.
        let mut counts = [0usize; 3];
        for i in 0..n {
            let mut rng = seed::rng(100, "emp_eps_i", i as u64);
            counts[perturb_level(1, 3, eps, &mut rng).unwrap()] += 1;
        }
        for (l, &p) in [eps / 2.0, 1.0 - eps, eps / 2.0].iter().enumerate() {
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (counts[l] as f64 - mean).abs() <= 3.0 * sd,
                "level {l}: count {} vs expected {mean:.1}",
                counts[l]
            );
        }
    }

    #[test]
    fn noiseless_config_reproduces_plain_synthesis() {
        let table = crate::dataset::sample_fico_like(300, 5).unwrap();
        let scheme = fico::base_scheme().scheme;
        let a = synthesize_with_noise(&scheme, &table, &NoiseConfig::noiseless(1)).unwrap();
        let bound = scheme.bind(&table).unwrap();
        for r in 0..table.n_rows() {
            let (y, e) = bound.apply_row(&table, r);
            assert_eq!(a.y[r], y);
            assert_eq!(a.e[r], Some(e));
        }
    }

    #[test]
    fn noise_touches_labels_only_and_is_deterministic() {
        let table = crate::dataset::sample_fico_like(500, 5).unwrap();
        let scheme = fico::base_scheme().scheme;
        let cfg = NoiseConfig::new(0.3, 0.1, 11);
        let a = synthesize_with_noise(&scheme, &table, &cfg).unwrap();
        let b = synthesize_with_noise(&scheme, &table, &cfg).unwrap();
        assert_eq!(a, b);
        let clean = synthesize_with_noise(&scheme, &table, &NoiseConfig::noiseless(11)).unwrap();
        assert_eq!(a.features, clean.features);
        assert_ne!(a.e, clean.e, "tau=0.3 should flip at least one label in 500 rows");
    }

    #[test]
    fn per_column_streams_do_not_interfere() {
        // Dropping one column from the noise set leaves the other columns'
        // noisy levels untouched: streams are keyed by column name.
        let table = crate::dataset::sample_fico_like(200, 8).unwrap();
        let full = fico::base_scheme().scheme;
        let mut reduced = full.clone();
        reduced.discretizations.retain(|d| d.column != "NetFractionRevolvingBurden");
        reduced.rules.rules = vec![crate::rules::Rule {
            conditions: vec![],
            y: false,
            explanation: 2,
        }];
        let cfg = NoiseConfig::new(0.3, 0.2, 21);
        let bf = full.bind(&table).unwrap();
        let br = reduced.bind(&table).unwrap();
        let sf = column_stats(&full, &table).unwrap();
        let sr = column_stats(&reduced, &table).unwrap();
        for row in 0..table.n_rows() {
            let lf = noisy_levels(&bf, &table, row, &cfg, &sf).unwrap();
            let lr = noisy_levels(&br, &table, row, &cfg, &sr).unwrap();
            // Full scheme: [NFRB, PTND, AVG_M, MAX_DELQ, INQ]; reduced drops
            // the first, so indices shift by one.
            assert_eq!(&lf[1..], &lr[..]);
        }
    }

    #[test]
    fn constant_column_rejected_for_threshold_noise() {
        let table = FeatureTable::new(vec!["debt".into()], vec![vec![50.0; 10]]).unwrap();
        let scheme = LabelingScheme {
            discretizations: vec![debt_spec()],
            explanations: crate::rules::ExplanationSpace::new(vec![crate::rules::Explanation {
                text: "x".into(),
                y: false,
                parent: None,
                level: 1,
            }])
            .unwrap(),
            rules: crate::rules::RuleSet {
                rules: vec![crate::rules::Rule { conditions: vec![], y: false, explanation: 0 }],
            },
        };
        assert!(synthesize_with_noise(&scheme, &table, &NoiseConfig::new(0.3, 0.0, 1)).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(NoiseConfig::new(-0.1, 0.0, 1).validate().is_err());
        assert!(NoiseConfig::new(0.0, 1.5, 1).validate().is_err());
        assert!(NoiseConfig::new(0.1, 0.2, 1).validate().is_ok());
    }
}
