//! Soft-margin linear SVM with an unregularized bias,
//!
//! ```text
//!   min_{w,b}  ½‖w‖² + c Σ_k max(0, 1 − y_k (wᵀf_k + b))
//! ```
//!
//! solved in the dual by pairwise coordinate ascent (SMO with second-order
//! working-set selection). Termination is on the duality gap between the
//! primal at `(w, b*)`, with `b*` the exact primal-optimal bias for the
//! current `w`, and the dual objective.

use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::covariance::Label;
use crate::error::{invalid, Result};

use super::LinearDecisionFunction;

/// Gram matrices up to this many entries are precomputed.
const GRAM_CACHE_LIMIT: usize = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub c: f64,
    /// Stop once primal − dual falls below this.
    pub gap_tol: f64,
    /// Iteration cap in epochs of `n` pair updates.
    pub max_epochs: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            gap_tol: 1e-6,
            max_epochs: 100_000,
        }
    }
}

impl SvmOptions {
    pub fn with_c(c: f64) -> Self {
        Self { c, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SvmFit {
    pub function: LinearDecisionFunction,
    /// Dual variables, one per training example.
    pub dual: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the weight vector vanishes (no usable margin).
    pub low_confidence: bool,
}

impl SvmFit {
    pub fn duality_gap(&self) -> f64 {
        self.primal_objective - self.dual_objective
    }
}

struct Kernel<'a> {
    x: &'a DMatrix<f64>,
    gram: Option<DMatrix<f64>>,
    diag: Vec<f64>,
}

impl<'a> Kernel<'a> {
    /// `x` holds one example per column.
    fn new(x: &'a DMatrix<f64>) -> Self {
        let n = x.ncols();
        let diag = x.column_iter().map(|c| c.norm_squared()).collect();
        let gram = (n * n <= GRAM_CACHE_LIMIT).then(|| x.transpose() * x);
        Self { x, gram, diag }
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        let n = self.x.ncols();
        match &self.gram {
            // symmetric and column-major, so column i is row i
            Some(g) => Cow::Borrowed(&g.as_slice()[i * n..(i + 1) * n]),
            None => Cow::Owned((self.x.transpose() * self.x.column(i)).as_slice().to_vec()),
        }
    }
}

/// Primal-optimal bias for fixed scores `s_k = wᵀf_k`: minimizes
/// `Σ max(0, 1 − y_k (s_k + b))`, a convex piecewise-linear function of b
/// with breakpoints at `y_k − s_k`.
fn optimal_bias(scores: &[f64], y: &[f64]) -> f64 {
    let mut breaks: Vec<f64> = scores.iter().zip(y).map(|(&s, &yk)| yk - s).collect();
    breaks.sort_by(f64::total_cmp);
    // Left of every breakpoint the slope is −#positives; each breakpoint
    // crossed adds one.
    let mut slope = -(y.iter().filter(|&&v| v > 0.0).count() as f64);
    for (k, &b) in breaks.iter().enumerate() {
        slope += 1.0;
        if slope == 0.0 {
            // flat on [b_k, b_{k+1}]
            return breaks.get(k + 1).map_or(b, |next| 0.5 * (b + next));
        }
        if slope > 0.0 {
            return b;
        }
    }
    breaks.last().copied().unwrap_or(0.0)
}

fn hinge_sum(scores: &[f64], y: &[f64], b: f64) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(&s, &yk)| (1.0 - yk * (s + b)).max(0.0))
        .sum()
}

/// Trains the linear SVM. `features` are equal-length vectors.
pub fn train_linear_svm(features: &[Vec<f64>], labels: &[Label], opts: SvmOptions) -> Result<SvmFit> {
    let n = features.len();
    if n != labels.len() {
        return invalid(format!("{n} feature vectors but {} labels", labels.len()));
    }
    if !(opts.c > 0.0 && opts.c.is_finite()) {
        return invalid(format!("SVM cost must be positive, got {}", opts.c));
    }
    let n_pos = labels.iter().filter(|&&l| l == Label::Right).count();
    if n_pos == 0 || n_pos == n {
        return invalid("SVM training needs at least one example of each class");
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return invalid("feature vectors must be non-empty and of equal length");
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("feature vectors contain non-finite values");
    }

    let x = DMatrix::from_fn(dim, n, |i, k| features[k][i]);
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
    let kernel = Kernel::new(&x);
    let c = opts.c;

    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα with Q_ij = y_i y_j K_ij
    let mut grad = vec![-1.0; n];
    let mut w = vec![0.0; dim];

    let max_iter = opts.max_epochs.saturating_mul(n.max(1));
    let mut iterations = 0usize;
    let mut kkt_tol = 1e-3;
    let mut converged = false;

    let evaluate = |alpha: &[f64], w: &[f64]| {
        let wv = nalgebra::DVector::from_column_slice(w);
        let scores: Vec<f64> = (x.transpose() * &wv).iter().copied().collect();
        let b = optimal_bias(&scores, &y);
        let half_w2 = 0.5 * wv.norm_squared();
        let primal = half_w2 + c * hinge_sum(&scores, &y, b);
        let dual = alpha.iter().sum::<f64>() - half_w2;
        (b, primal, dual)
    };

    loop {
        let selected = select_pair(&alpha, &grad, &y, c, &kernel, kkt_tol);
        match selected {
            Some((i, j)) if iterations < max_iter => {
                iterations += 1;
                let ki = kernel.row(i).into_owned();
                let kj = kernel.row(j);
                update_pair(i, j, &ki, &kj, &mut alpha, &mut grad, &y, c, &kernel.diag, &x, &mut w);
            }
            Some(_) => break,
            None => {
                let (_, primal, dual) = evaluate(&alpha, &w);
                if primal - dual < opts.gap_tol {
                    converged = true;
                    break;
                }
                if kkt_tol < 1e-14 || iterations >= max_iter {
                    break;
                }
                kkt_tol *= 0.1;
            }
        }
    }

    let (bias, primal, dual) = evaluate(&alpha, &w);
    let w_norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = kernel.diag.iter().copied().fold(0.0, f64::max).sqrt();
    let low_confidence = w_norm * scale.max(1e-300) < 1e-9;
    Ok(SvmFit {
        function: LinearDecisionFunction { weights: w, bias },
        dual: alpha,
        primal_objective: primal,
        dual_objective: dual,
        iterations,
        converged: converged || primal - dual < opts.gap_tol,
        low_confidence,
    })
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal-violating `i` with second-order choice of `j`; `None` once the
/// KKT violation `m − M` is below `tol`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64, kernel: &Kernel, tol: f64) -> Option<(usize, usize)> {
    let mut g_max = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..alpha.len() {
        if in_up(alpha[t], y[t], c) {
            let v = -y[t] * grad[t];
            if v > g_max {
                g_max = v;
                i_sel = Some(t);
            }
        }
    }
    let i = i_sel?;
    let ki = kernel.row(i);
    let mut g_min = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut j_sel = None;
    for t in 0..alpha.len() {
        if !in_low(alpha[t], y[t], c) {
            continue;
        }
        let v = -y[t] * grad[t];
        g_min = g_min.min(v);
        let b = g_max - v;
        if b > 0.0 {
            let a = (kernel.diag[i] + kernel.diag[t] - 2.0 * ki[t]).max(1e-12);
            let obj = -(b * b) / a;
            if obj < best {
                best = obj;
                j_sel = Some(t);
            }
        }
    }
    if g_max - g_min < tol {
        return None;
    }
    j_sel.map(|j| (i, j))
}

#[allow(clippy::too_many_arguments)]
fn update_pair(
    i: usize,
    j: usize,
    ki: &[f64],
    kj: &[f64],
    alpha: &mut [f64],
    grad: &mut [f64],
    y: &[f64],
    c: f64,
    diag: &[f64],
    x: &DMatrix<f64>,
    w: &mut [f64],
) {
    let (old_i, old_j) = (alpha[i], alpha[j]);
    let quad = (diag[i] + diag[j] - 2.0 * ki[j]).max(1e-12);
    let (mut ai, mut aj);
    if y[i] != y[j] {
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = old_i - old_j;
        ai = old_i + delta;
        aj = old_j + delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let delta = (grad[i] - grad[j]) / quad;
        let sum = old_i + old_j;
        ai = old_i - delta;
        aj = old_j + delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    let (di, dj) = (ai - old_i, aj - old_j);
    alpha[i] = ai;
    alpha[j] = aj;
    for t in 0..grad.len() {
        grad[t] += y[t] * (y[i] * di * ki[t] + y[j] * dj * kj[t]);
    }
    let (ci, cj) = (x.column(i), x.column(j));
    for d in 0..w.len() {
        w[d] += y[i] * di * ci[d] + y[j] * dj * cj[d];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn labels(signs: &[i64]) -> Vec<Label> {
        signs.iter().map(|&s| Label::from_sign(s).unwrap()).collect()
    }

    fn primal(features: &[Vec<f64>], y: &[Label], w: &[f64], b: f64, c: f64) -> f64 {
        let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = features
            .iter()
            .zip(y)
            .map(|(f, l)| {
                let s: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
                (1.0 - l.sign() * (s + b)).max(0.0)
            })
            .sum();
        reg + c * loss
    }

    /// Coarse-to-fine grid search over (w1, w2, b) of the primal objective.
    fn grid_oracle(features: &[Vec<f64>], y: &[Label], c: f64) -> f64 {
        let mut center = [0.0f64; 3];
        let mut half = 8.0;
        let steps = 16i32;
        let mut best = f64::INFINITY;
        for _ in 0..60 {
            let h = half / steps as f64;
            let mut best_pt = center;
            for a in -steps..=steps {
                for bb in -steps..=steps {
                    for cc in -steps..=steps {
                        let p = [
                            center[0] + a as f64 * h,
                            center[1] + bb as f64 * h,
                            center[2] + cc as f64 * h,
                        ];
                        let v = primal(features, y, &p[..2], p[2], c);
                        if v < best {
                            best = v;
                            best_pt = p;
                        }
                    }
                }
            }
            center = best_pt;
            half *= 0.5;
        }
        best
    }

    #[test]
    fn symmetric_one_dimensional_pair() {
        let f = vec![vec![-1.0], vec![1.0]];
        let y = labels(&[-1, 1]);
        let fit = train_linear_svm(&f, &y, SvmOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.function.bias, 0.0, epsilon = 1e-9);
        assert_relative_eq!(fit.function.weights[0], 1.0, epsilon = 1e-9);
        assert_eq!(fit.function.classify(&[-1.0]), Label::Left);
        assert_eq!(fit.function.classify(&[1.0]), Label::Right);
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 0.5).unwrap();
        let mut f = Vec::new();
        let mut y = Vec::new();
        for k in 0..60 {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            f.push(vec![3.0 * s + n.sample(&mut rng), 1.0 + n.sample(&mut rng)]);
            y.push(Label::from_score(s));
        }
        let fit = train_linear_svm(&f, &y, SvmOptions::with_c(10.0)).unwrap();
        assert!(fit.converged && fit.duality_gap() < 1e-6);
        for (x, l) in f.iter().zip(&y) {
            assert_eq!(fit.function.classify(x), *l);
        }
    }

    #[test]
    fn five_point_objective_matches_grid_oracle() {
        let f = vec![
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![2.0, 0.5],
            vec![1.5, 1.8],
            vec![-0.5, 0.2],
        ];
        let y = labels(&[-1, -1, 1, 1, -1]);
        for &c in &[0.1, 1.0] {
            let fit = train_linear_svm(&f, &y, SvmOptions::with_c(c)).unwrap();
            let oracle = grid_oracle(&f, &y, c);
            assert!(
                (fit.primal_objective - oracle).abs() < 1e-4,
                "c={c}: {} vs {oracle}",
                fit.primal_objective
            );
            let direct = primal(&f, &y, &fit.function.weights, fit.function.bias, c);
            assert_relative_eq!(direct, fit.primal_objective, epsilon = 1e-12);
        }
    }

    #[test]
    fn kkt_conditions_hold_on_overlapping_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut f = Vec::new();
        let mut y = Vec::new();
        for k in 0..200 {
            let s = if k % 3 == 0 { 1.0 } else { -1.0 };
            f.push(
                (0..5)
                    .map(|d| n.sample(&mut rng) + if d == 0 { 0.7 * s } else { 0.0 })
                    .collect::<Vec<_>>(),
            );
            y.push(Label::from_score(s));
        }
        let c = 0.5;
        let fit = train_linear_svm(&f, &y, SvmOptions::with_c(c)).unwrap();
        assert!(fit.converged, "gap {}", fit.duality_gap());
        assert!(fit.duality_gap() < 1e-6);
        for ((x, l), a) in f.iter().zip(&y).zip(&fit.dual) {
            let margin = l.sign() * fit.function.decision(x);
            if margin < 1.0 - 1e-3 {
                assert!((a - c).abs() < 1e-6, "slack example must be at the bound (alpha {a})");
            }
            if *a < 1e-9 {
                assert!(margin > 1.0 - 1e-3);
            }
        }
        let balance: f64 = fit.dual.iter().zip(&y).map(|(a, l)| a * l.sign()).sum();
        assert!(balance.abs() < 1e-9);
    }

    #[test]
    fn identical_features_are_low_confidence() {
        let f = vec![vec![1.0, 2.0]; 6];
        let y = labels(&[1, -1, 1, -1, 1, 1]);
        let fit = train_linear_svm(&f, &y, SvmOptions::default()).unwrap();
        assert!(fit.low_confidence);
    }

    #[test]
    fn bad_inputs() {
        let f = vec![vec![1.0], vec![2.0]];
        assert!(train_linear_svm(&f, &labels(&[1, 1]), SvmOptions::default()).is_err());
        assert!(train_linear_svm(&f, &labels(&[1, -1]), SvmOptions::with_c(0.0)).is_err());
        assert!(train_linear_svm(&f, &labels(&[1]), SvmOptions::default()).is_err());
    }

    #[test]
    fn optimal_bias_balances_hinge() {
        // all scores zero: b* in [-1, 1] minimizing #pos·max(0,1−b) + #neg·max(0,1+b)
        let y = [1.0, 1.0, 1.0, -1.0];
        let b = optimal_bias(&[0.0; 4], &y);
        assert_relative_eq!(b, 1.0);
        let y = [1.0, -1.0];
        let b = optimal_bias(&[0.0; 2], &y);
        assert!(hinge_sum(&[0.0; 2], &y, b) <= 2.0 + 1e-12);
    }
}
