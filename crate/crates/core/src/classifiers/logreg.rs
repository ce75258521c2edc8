//! Multinomial logistic regression: softmax cross-entropy with an l1 or l2
//! penalty, minimized by full-batch accelerated proximal gradient descent
//! with backtracking line search.
//!
//! The objective is `(1/n) sum_i CE_i + (1/(C n)) * penalty(W)` with the l2
//! penalty halved, matching the usual inverse-regularization `C`; the bias
//! is never penalized. Features are standardized internally at fit time and
//! the scaling is replayed at prediction. Weights start at zero, momentum
//! steps that would increase the objective fall back to a plain proximal
//! step, so the recorded objective curve never increases. Training stops
//! when the (generalized) gradient's infinity norm drops below 1e-6 or
//! after 10^4 iterations.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;

use super::{LogRegParams, Penalty};

pub(crate) fn default_tol() -> f64 {
    1e-6
}

pub(crate) fn default_max_iterations() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Row-major d x K weight matrix.
    weights: Vec<f64>,
    bias: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
    n_classes: usize,
    n_features: usize,
    params: LogRegParams,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after each accepted iterate; non-increasing.
    pub objective_curve: Vec<f64>,
}

/// The smooth part of the training problem, shared by the optimizer and the
/// finite-difference tests.
pub(crate) struct Problem {
    /// Standardized n x d design matrix.
    pub xs: Array2<f64>,
    pub labels: Vec<u16>,
    /// l2 coefficient inside the smooth part; 0 under an l1 penalty.
    pub l2: f64,
    /// l1 coefficient handled by the proximal step; 0 under l2.
    pub l1: f64,
}

/// Per-row cross-entropy given the label, turning the score row into
/// softmax probabilities in place.
fn row_loss_softmax(row: &mut [f64], label: usize) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let z_y = row[label];
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
    m + sum.ln() - z_y
}

/// Per-row log-sum-exp cross-entropy without touching the row.
fn row_loss(row: &[f64], label: usize) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln() - row[label]
}

/// Map rows of a standard-layout matrix to per-row values, in parallel when
/// enabled. Results come back in row order, so the caller's sequential sum
/// is identical in both modes.
fn map_rows_mut<F>(z: &mut Array2<f64>, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) -> f64 + Sync + Send,
{
    let k = z.ncols();
    let s = z.as_slice_mut().expect("standard layout");
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        s.par_chunks_mut(k).enumerate().map(|(i, row)| f(i, row)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        s.chunks_mut(k).enumerate().map(|(i, row)| f(i, row)).collect()
    }
}

fn map_rows<F>(z: &Array2<f64>, f: F) -> Vec<f64>
where
    F: Fn(usize, &[f64]) -> f64 + Sync + Send,
{
    let k = z.ncols();
    let s = z.as_slice().expect("standard layout");
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        s.par_chunks(k).enumerate().map(|(i, row)| f(i, row)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        s.chunks(k).enumerate().map(|(i, row)| f(i, row)).collect()
    }
}

impl Problem {
    /// Smooth objective (mean cross-entropy plus the l2 term).
    pub fn smooth_loss(&self, w: &Array2<f64>, b: &Array1<f64>) -> f64 {
        let n = self.xs.nrows() as f64;
        let z = self.xs.dot(w) + b;
        let losses = map_rows(&z, |i, row| row_loss(row, self.labels[i] as usize));
        losses.iter().sum::<f64>() / n + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Smooth objective and its gradient in (W, b).
    pub fn smooth_loss_grad(&self, w: &Array2<f64>, b: &Array1<f64>) -> (f64, Array2<f64>, Array1<f64>) {
        let n = self.xs.nrows();
        let nf = n as f64;
        let mut p = self.xs.dot(w) + b;
        let labels = &self.labels;
        let losses = map_rows_mut(&mut p, |i, row| {
            let y = labels[i] as usize;
            let loss = row_loss_softmax(row, y);
            row[y] -= 1.0;
            loss
        });
        p /= nf;
        let gb = p.sum_axis(Axis(0));
        let mut gw = self.xs.t().dot(&p);
        if self.l2 > 0.0 {
            gw.scaled_add(self.l2, w);
        }
        let loss = losses.iter().sum::<f64>() / nf
            + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>();
        (loss, gw, gb)
    }

    /// Full objective including the l1 term.
    pub fn objective(&self, w: &Array2<f64>, b: &Array1<f64>) -> f64 {
        self.smooth_loss(w, b) + self.l1 * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Soft-threshold step on the weights; the bias takes a plain step.
    fn prox(&self, w: Array2<f64>, step: f64) -> Array2<f64> {
        if self.l1 == 0.0 {
            return w;
        }
        let t = step * self.l1;
        w.mapv(|v| {
            if v > t {
                v - t
            } else if v < -t {
                v + t
            } else {
                0.0
            }
        })
    }
}

/// One backtracked proximal step from `(w, b)` along `(gw, gb)`.
/// Returns the new point, the (possibly shrunk) step, and the smooth loss
/// at the new point.
fn prox_step(
    problem: &Problem,
    w: &Array2<f64>,
    b: &Array1<f64>,
    f_smooth: f64,
    gw: &Array2<f64>,
    gb: &Array1<f64>,
    mut step: f64,
) -> (Array2<f64>, Array1<f64>, f64, f64) {
    loop {
        let w_new = problem.prox(w - &(step * gw), step);
        let b_new = b - &(step * gb);
        let dw = &w_new - w;
        let db = &b_new - b;
        let f_new = problem.smooth_loss(&w_new, &b_new);
        let inner: f64 = gw.iter().zip(dw.iter()).map(|(g, d)| g * d).sum::<f64>()
            + gb.iter().zip(db.iter()).map(|(g, d)| g * d).sum::<f64>();
        let sq: f64 = dw.iter().map(|d| d * d).sum::<f64>() + db.iter().map(|d| d * d).sum::<f64>();
        if f_new <= f_smooth + inner + sq / (2.0 * step) + 1e-14 || step < 1e-12 {
            return (w_new, b_new, step, f_new);
        }
        step *= 0.5;
    }
}

/// Infinity norm of the generalized gradient at the evaluation point: the
/// plain gradient under l2, the proximal gradient mapping under l1.
fn stationarity(
    problem: &Problem,
    w: &Array2<f64>,
    _b: &Array1<f64>,
    gw: &Array2<f64>,
    gb: &Array1<f64>,
) -> f64 {
    let gb_inf = gb.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if problem.l1 == 0.0 {
        gw.iter().fold(gb_inf, |a, &v| a.max(v.abs()))
    } else {
        let t = 1.0;
        let mapped = problem.prox(w - &(t * gw), t);
        (w - &mapped)
            .iter()
            .fold(gb_inf, |a, &v| a.max(v.abs() / t))
    }
}

impl LogRegModel {
    pub fn fit(x: &FeatureTable, labels: &[u16], n_classes: usize, params: LogRegParams) -> Self {
        let (n, d) = (x.n_rows(), x.n_cols());
        let mut means = vec![0.0; d];
        let mut stds = vec![1.0; d];
        for (j, col) in x.columns().iter().enumerate() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            means[j] = mean;
            stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let mut xs = Array2::zeros((n, d));
        for (j, col) in x.columns().iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                xs[(i, j)] = (v - means[j]) / stds[j];
            }
        }

        let reg = 1.0 / (params.c * n as f64);
        let problem = Problem {
            xs,
            labels: labels.to_vec(),
            l2: if params.penalty == Penalty::L2 { reg } else { 0.0 },
            l1: if params.penalty == Penalty::L1 { reg } else { 0.0 },
        };

        // Monotone accelerated proximal gradient: the backtracked candidate
        // z always drives the momentum sequence, but the reported iterate x
        // only moves when the objective improves, keeping the curve
        // non-increasing without extra gradient evaluations.
        let mut x_w = Array2::<f64>::zeros((d, n_classes));
        let mut x_b = Array1::<f64>::zeros(n_classes);
        let mut y_w = x_w.clone();
        let mut y_b = x_b.clone();
        let mut t_k: f64 = 1.0;
        let mut step: f64 = 1.0;
        // Grow the step only after an iteration that needed no backtracking,
        // so the usual iteration costs exactly one line-search trial.
        let mut grow = false;
        let mut f_curr = problem.objective(&x_w, &x_b);
        let mut curve = vec![f_curr];
        let mut converged = false;
        let mut iterations = 0;

        for k in 0..params.max_iterations {
            iterations = k + 1;
            let (fy, gw, gb) = problem.smooth_loss_grad(&y_w, &y_b);
            if stationarity(&problem, &y_w, &y_b, &gw, &gb) < params.tol {
                converged = true;
                iterations = k;
                break;
            }
            if grow {
                step = (step * 2.0).min(1e3);
            }
            let tried = step;
            let (z_w, z_b, used, f_smooth_z) = prox_step(&problem, &y_w, &y_b, fy, &gw, &gb, step);
            step = used;
            grow = used == tried;
            let f_z = f_smooth_z + problem.l1 * z_w.iter().map(|v| v.abs()).sum::<f64>();

            if f_z <= f_curr {
                // Accept and extrapolate past the new iterate.
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
                let c = (t_k - 1.0) / t_next;
                y_w = &z_w + &((&z_w - &x_w) * c);
                y_b = &z_b + &((&z_b - &x_b) * c);
                x_w = z_w;
                x_b = z_b;
                f_curr = f_z;
                t_k = t_next;
            } else {
                // Momentum overshot: restart from the best iterate. The
                // next candidate is then a plain descent step, which the
                // line search guarantees to improve.
                y_w = x_w.clone();
                y_b = x_b.clone();
                t_k = 1.0;
            }
            curve.push(f_curr);
        }

        LogRegModel {
            weights: x_w.into_iter().collect(),
            bias: x_b.to_vec(),
            means,
            stds,
            n_classes,
            n_features: d,
            params,
            converged,
            iterations,
            objective_curve: curve,
        }
    }

    fn scores_row(&self, x: &FeatureTable, row: usize) -> Vec<f64> {
        let mut z = self.bias.clone();
        for j in 0..self.n_features {
            let v = (x.column(j)[row] - self.means[j]) / self.stds[j];
            let wrow = &self.weights[j * self.n_classes..(j + 1) * self.n_classes];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += v * wrow[k];
            }
        }
        z
    }

    fn argmax(z: &[f64]) -> usize {
        let mut best = 0usize;
        for (k, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = k;
            }
        }
        best
    }

    pub fn predict(&self, x: &FeatureTable) -> Vec<usize> {
        (0..x.n_rows()).map(|r| Self::argmax(&self.scores_row(x, r))).collect()
    }

    /// Class plus its softmax probability.
    pub fn predict_scored(&self, x: &FeatureTable) -> Vec<(usize, f64)> {
        (0..x.n_rows())
            .map(|r| {
                let z = self.scores_row(x, r);
                let best = Self::argmax(&z);
                let m = z[best];
                let sum: f64 = z.iter().map(|&v| (v - m).exp()).sum();
                (best, 1.0 / sum)
            })
            .collect()
    }
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences of the smooth objective, on a seeded random instance
/// with `n` rows, `d` features, and `k` classes. Every weight and bias
/// coordinate is probed. Self-check used by the verification suite.
pub fn gradient_check(n: usize, d: usize, k: usize, penalty: Penalty, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = crate::seed::rng(seed, "logreg_fd_check", 0);
    let xs = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
    let labels: Vec<u16> = (0..n).map(|_| rng.gen_range(0..k) as u16).collect();
    let reg = 1.0 / (0.7 * n as f64);
    let problem = Problem {
        xs,
        labels,
        l2: if penalty == Penalty::L2 { reg } else { 0.0 },
        l1: if penalty == Penalty::L1 { reg } else { 0.0 },
    };
    let mut w = Array2::from_shape_fn((d, k), |_| rng.gen_range(-0.5..0.5));
    let mut b = Array1::from_shape_fn(k, |_| rng.gen_range(-0.5..0.5));
    let (_, gw, gb) = problem.smooth_loss_grad(&w, &b);

    let h = 1e-6;
    let mut worst = 0.0f64;
    for j in 0..d {
        for c in 0..k {
            let orig = w[(j, c)];
            w[(j, c)] = orig + h;
            let fp = problem.smooth_loss(&w, &b);
            w[(j, c)] = orig - h;
            let fm = problem.smooth_loss(&w, &b);
            w[(j, c)] = orig;
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((gw[(j, c)] - fd).abs() / fd.abs().max(1e-8));
        }
    }
    for c in 0..k {
        let orig = b[c];
        b[c] = orig + h;
        let fp = problem.smooth_loss(&w, &b);
        b[c] = orig - h;
        let fm = problem.smooth_loss(&w, &b);
        b[c] = orig;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((gb[c] - fd).abs() / fd.abs().max(1e-8));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_central_finite_differences() {
        // 50 rows, 5 features, 3 classes; relative error below 1e-4.
        let worst = gradient_check(50, 5, 3, Penalty::L2, 13);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    fn separable_toy() -> (FeatureTable, Vec<u16>) {
        // Two clusters split by the first feature.
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut labels = Vec::new();
        for i in 0..25 {
            a.push(-2.0 - (i as f64) * 0.05);
            b.push(i as f64 * 0.1);
            labels.push(0u16);
            a.push(2.0 + (i as f64) * 0.05);
            b.push(-(i as f64) * 0.1);
            labels.push(1u16);
        }
        (FeatureTable::new(vec!["a".into(), "b".into()], vec![a, b]).unwrap(), labels)
    }

    #[test]
    fn linearly_separable_classes_reach_full_training_accuracy() {
        let (x, labels) = separable_toy();
        for penalty in [Penalty::L2, Penalty::L1] {
            let model = LogRegModel::fit(&x, &labels, 2, LogRegParams::new(penalty, 10.0));
            let correct = model
                .predict(&x)
                .iter()
                .zip(&labels)
                .filter(|(p, l)| **p == **l as usize)
                .count();
            assert_eq!(correct, x.n_rows(), "{penalty:?}");
        }
    }

    #[test]
    fn objective_curve_never_increases() {
        let x = crate::dataset::sample_fico_like(300, 4).unwrap();
        let labels: Vec<u16> = (0..300).map(|i| (i % 4) as u16).collect();
        for penalty in [Penalty::L2, Penalty::L1] {
            let model = LogRegModel::fit(&x, &labels, 4, LogRegParams::new(penalty, 1.0));
            for w in model.objective_curve.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{penalty:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let x = crate::dataset::sample_fico_like(200, 6).unwrap();
        let labels: Vec<u16> = (0..200).map(|i| (i % 3) as u16).collect();
        let p = LogRegParams::new(Penalty::L2, 0.5);
        let a = LogRegModel::fit(&x, &labels, 3, p);
        let b = LogRegModel::fit(&x, &labels, 3, p);
        assert_eq!(a, b);
    }

    #[test]
    fn l1_produces_sparser_weights_than_l2() {
        let x = crate::dataset::sample_fico_like(400, 8).unwrap();
        let labels: Vec<u16> = x
            .column_by_name("NetFractionRevolvingBurden")
            .unwrap()
            .iter()
            .map(|&v| u16::from(v > 50.0))
            .collect();
        let l1 = LogRegModel::fit(&x, &labels, 2, LogRegParams::new(Penalty::L1, 0.01));
        let l2 = LogRegModel::fit(&x, &labels, 2, LogRegParams::new(Penalty::L2, 0.01));
        let zeros = |m: &LogRegModel| m.weights.iter().filter(|v| **v == 0.0).count();
        assert!(zeros(&l1) > zeros(&l2), "l1 zeros {} vs l2 zeros {}", zeros(&l1), zeros(&l2));
    }
}
