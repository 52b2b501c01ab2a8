//! Minimal expected switch duration under a birth-death model of an
//! attention-steered gain controller.
//!
//! The controller walks over `K` states with gains `g_i = i / (K − 1)`. Each
//! decision of length τ moves one state toward the attended speaker with
//! probability p (the accuracy at τ) and one state away otherwise, reflecting
//! at both ends. A design `(τ, K)` is admissible when the stationary
//! distribution keeps at least [`STABILITY_MASS`] on states with gain at or
//! above [`COMFORT_GAIN`]. Its switch duration is τ times the expected number
//! of steps from the last state at or below `1 − COMFORT_GAIN` to the first
//! state at or above `COMFORT_GAIN`. MESD is the minimum over admissible
//! designs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::AccuracyCurve;

pub const COMFORT_GAIN: f64 = 0.8;
pub const STABILITY_MASS: f64 = 0.9;
pub const MIN_STATES: usize = 2;
pub const MAX_STATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesdResult {
    pub mesd_s: f64,
    pub optimal_window_s: f64,
    pub optimal_n_states: usize,
    /// False when the optimum sits at the largest state count searched.
    pub converged: bool,
}

/// Expected steps from `from` to the first visit of `to` for a walk that
/// goes up with probability `p` and down otherwise, holding at state 0.
pub fn expected_hitting_time(p: f64, from: usize, to: usize, n_states: usize) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("step-up probability must lie in (0, 1], got {p}"));
    }
    if !(from < to && to < n_states) {
        return invalid(format!("need from < to < n_states, got {from}, {to}, {n_states}"));
    }
    // h_k: expected steps from k to k + 1
    let mut h = 1.0 / p;
    let mut total = 0.0;
    for k in 0..to {
        if k > 0 {
            h = (1.0 + (1.0 - p) * h) / p;
        }
        if k >= from {
            total += h;
        }
    }
    Ok(total)
}

/// Index of the first state with gain ≥ `COMFORT_GAIN` and of the last with
/// gain ≤ `1 − COMFORT_GAIN`, in exact integer arithmetic (0.8 = 4/5).
pub fn target_and_initial(n_states: usize) -> (usize, usize) {
    let m = n_states - 1;
    let target = (4 * m).div_ceil(5);
    let initial = m / 5;
    (target, initial)
}

/// Stationary probability of states `≥ target` for the reflecting walk,
/// `π_i ∝ (p / (1 − p))^i`.
pub fn stationary_upper_mass(p: f64, target: usize, n_states: usize) -> f64 {
    // weights relative to the top state: q^(K−1−i), q = (1 − p) / p ≤ 1
    let q = (1.0 - p) / p;
    let mut upper = 0.0;
    let mut total = 0.0;
    let mut w = 1.0;
    for i in (0..n_states).rev() {
        total += w;
        if i >= target {
            upper += w;
        }
        w *= q;
    }
    upper / total
}

/// Exhaustive minimization over window lengths with p > ½ and state counts
/// in `[MIN_STATES, MAX_STATES]`.
pub fn mesd(curve: &AccuracyCurve) -> Result<MesdResult> {
    if curve.points.is_empty() {
        return invalid("accuracy curve is empty");
    }
    let mut best: Option<MesdResult> = None;
    for point in &curve.points {
        let p = point.accuracy;
        if !(p > 0.5) {
            continue;
        }
        for k in MIN_STATES..=MAX_STATES {
            let (target, initial) = target_and_initial(k);
            if stationary_upper_mass(p, target, k) < STABILITY_MASS {
                continue;
            }
            let duration = point.window_s * expected_hitting_time(p, initial, target, k)?;
            if best.is_none_or(|b| duration < b.mesd_s) {
                best = Some(MesdResult {
                    mesd_s: duration,
                    optimal_window_s: point.window_s,
                    optimal_n_states: k,
                    converged: k < MAX_STATES,
                });
            }
        }
    }
    best.ok_or(Error::NoStableDesign)
}
