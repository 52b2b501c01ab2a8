#![allow(dead_code)]

use aad_rgc::evaluation::{AccuracyCurve, CurvePoint, Method, Significance};
use aad_rgc::spd::SpdMatrix;
use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| Distribution::<f64>::sample(&StandardNormal, rng))
}

pub fn random_orthogonal(c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(c, c, rng).qr().q()
}

/// `Q diag(λ) Qᵀ` with log-uniform eigenvalues spanning `cond`.
pub fn random_spd_with_cond(c: usize, cond: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = random_orthogonal(c, rng);
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let mut lambda: Vec<f64> = (0..c).map(|_| cond.powf(rng.random_range(0.0..1.0))).collect();
    lambda[0] = 1.0;
    if c > 1 {
        lambda[1] = cond;
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(c, lambda.into_iter().map(|l| l * scale)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_spd(c: usize, rng: &mut ChaCha8Rng) -> SpdMatrix {
    let cond = 10f64.powf(rng.random_range(0.0..3.0));
    SpdMatrix::new(random_spd_with_cond(c, cond, rng)).unwrap()
}

/// Invertible matrix with singular values in `[10^-spread, 10^spread]`.
pub fn random_invertible(c: usize, spread: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let u = random_orthogonal(c, rng);
    let v = random_orthogonal(c, rng);
    let s = DMatrix::from_diagonal(&DVector::from_fn(c, |_, _| {
        10f64.powf(rng.random_range(-spread..=spread))
    }));
    u * s * v.transpose()
}

/// `n` matrices sharing one eigenbasis.
pub fn commuting_set(c: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<SpdMatrix> {
    let q = random_orthogonal(c, rng);
    (0..n)
        .map(|_| {
            let d = DMatrix::from_diagonal(&DVector::from_fn(c, |_, _| 10f64.powf(rng.random_range(-1.0..1.0))));
            let m = &q * d * q.transpose();
            SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
        })
        .collect()
}

fn binomial(n: u64, k: u64) -> BigUint {
    let mut b = BigUint::from(1u32);
    for i in 0..k {
        b = b * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    b
}

/// Exact threshold: smallest k with `Σ_{j≥k} C(n, j) / 2ⁿ < alpha`, where
/// `alpha` is taken as the exact binary value of the f64.
pub fn exact_significance(n: u64, alpha: f64) -> Significance {
    let bits = alpha.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = (bits & ((1 << 52) - 1)) | (1 << 52);
    // alpha = mantissa · 2^(exp − 1075)
    let shift = 1075 - exp;
    assert!(shift > 0);
    let rhs = BigUint::from(mantissa) << n as usize;
    let mut tail = BigUint::from(0u32);
    let mut best = None;
    let mut c = BigUint::from(1u32);
    for k in (0..=n).rev() {
        if k < n {
            c = c * BigUint::from(k + 1) / BigUint::from(n - k);
        }
        debug_assert!(k != n / 2 || c == binomial(n, k));
        tail += &c;
        if (&tail << shift as usize) < rhs {
            best = Some(k);
        } else {
            break;
        }
    }
    match best {
        Some(k) => Significance::Threshold { k, n },
        None => Significance::Unattainable,
    }
}

/// Transition matrix of the reflecting walk over `k` states.
pub fn walk_matrix(p: f64, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        let up = (i + 1).min(k - 1);
        let down = i.saturating_sub(1);
        m[(i, up)] += p;
        m[(i, down)] += 1.0 - p;
    }
    m
}

/// Expected steps from `from` to the first visit of any state `≥ to`,
/// by solving `(I − Q) h = 1` on the transient states.
pub fn hitting_time_by_solve(p: f64, from: usize, to: usize, k: usize) -> f64 {
    let m = walk_matrix(p, k);
    let q = m.view((0, 0), (to, to)).into_owned();
    let a = DMatrix::identity(to, to) - q;
    let h = a.lu().solve(&DVector::from_element(to, 1.0)).unwrap();
    h[from]
}

/// Stationary distribution by detailed balance on the explicit matrix.
pub fn stationary_by_balance(p: f64, k: usize) -> Vec<f64> {
    let m = walk_matrix(p, k);
    let mut pi = vec![1.0];
    for i in 0..k - 1 {
        let next = pi[i] * m[(i, i + 1)] / m[(i + 1, i)];
        pi.push(next);
    }
    let s: f64 = pi.iter().sum();
    pi.iter().map(|v| v / s).collect()
}

pub struct GridOptimum {
    pub mesd_s: f64,
    pub window_s: f64,
    pub n_states: usize,
}

/// Exhaustive search over every (window, state count) pair.
pub fn mesd_by_grid(curve: &AccuracyCurve) -> Option<GridOptimum> {
    let mut best: Option<GridOptimum> = None;
    for point in &curve.points {
        let p = point.accuracy;
        if p <= 0.5 {
            continue;
        }
        for k in 2..=100usize {
            let gains: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
            let target = gains.iter().position(|&g| g >= 0.8 - 1e-12).unwrap();
            let initial = gains.iter().rposition(|&g| g <= 0.2 + 1e-12).unwrap();
            let pi = stationary_by_balance(p, k);
            if pi[target..].iter().sum::<f64>() < 0.9 {
                continue;
            }
            let d = point.window_s * hitting_time_by_solve(p, initial, target, k);
            if best.as_ref().is_none_or(|b| d < b.mesd_s) {
                best = Some(GridOptimum {
                    mesd_s: d,
                    window_s: point.window_s,
                    n_states: k,
                });
            }
        }
    }
    best
}

/// Mean steps of simulated walks from `from` until reaching `to`.
pub fn simulated_hitting_time(p: f64, from: usize, to: usize, walks: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut total = 0u64;
    for _ in 0..walks {
        let mut s = from;
        while s < to {
            if rng.random::<f64>() < p {
                s += 1;
            } else {
                s = s.saturating_sub(1);
            }
            total += 1;
        }
    }
    total as f64 / walks as f64
}

pub fn curve(points: &[(f64, f64)]) -> AccuracyCurve {
    AccuracyCurve {
        subject: "s".into(),
        method: Method::Rgc,
        points: points
            .iter()
            .map(|&(w, a)| CurvePoint {
                window_s: w,
                accuracy: a,
                n_decisions: 1000,
                n_correct: (a * 1000.0).round() as usize,
            })
            .collect(),
    }
}
