use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Chance-level threshold for `n` binary decisions at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Significance {
    /// `k / n` is the smallest accuracy whose binomial upper tail is below alpha.
    Threshold { k: u64, n: u64 },
    /// Even `n / n` correct is not significant.
    Unattainable,
}

impl Significance {
    pub fn accuracy(&self) -> Option<f64> {
        match *self {
            Significance::Threshold { k, n } => Some(k as f64 / n as f64),
            Significance::Unattainable => None,
        }
    }

    /// True when `accuracy` is strictly above the threshold.
    pub fn exceeded_by(&self, accuracy: f64) -> bool {
        self.accuracy().is_some_and(|t| accuracy > t)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Smallest `k / n` with `P[Binomial(n, ½) ≥ k] < alpha`.
pub fn significance_threshold(n: u64, alpha: f64) -> Result<Significance> {
    if n == 0 {
        return invalid("number of decisions must be positive");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    let ln_alpha = alpha.ln();
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    // walk k = n, n-1, ... accumulating the upper tail in log space;
    // ln C(n, k-1) = ln C(n, k) + ln(k / (n - k + 1))
    let mut ln_binom = 0.0;
    let mut ln_tail = f64::NEG_INFINITY;
    let mut best = None;
    for k in (0..=n).rev() {
        if k < n {
            ln_binom += ((k + 1) as f64 / (n - k) as f64).ln();
        }
        ln_tail = log_add(ln_tail, ln_binom + ln_half_n);
        if ln_tail < ln_alpha {
            best = Some(k);
        } else {
            break;
        }
    }
    Ok(match best {
        Some(k) => Significance::Threshold { k, n },
        None => Significance::Unattainable,
    })
}
