//! Synthetic two-class EEG-like recordings.
//!
//! Each trial draws i.i.d. Gaussian samples with a class-dependent spatial
//! covariance `Σ± = B + strength · ν · u± u±ᵀ` (B a random SPD base with
//! mean eigenvalue ν, u± random unit directions), adds spatially white
//! noise, and the whole recording is passed through the β-band bandpass.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::Label;
use crate::error::{invalid, Result};
use crate::sigproc::{design_butterworth_bandpass, filter_forward, Recording, Trial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub channels: usize,
    pub fs: f64,
    pub minutes: f64,
    /// Trial length; labels alternate between consecutive trials.
    pub trial_minutes: f64,
    /// Scale of the class-specific rank-one perturbation.
    pub strength: f64,
    /// Standard deviation of added white noise relative to the signal.
    pub noise: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 3,
            channels: 16,
            fs: 128.0,
            minutes: 36.0,
            trial_minutes: 6.0,
            strength: 1.0,
            noise: 0.0,
            band_low_hz: 12.0,
            band_high_hz: 30.0,
            seed: 0,
        }
    }
}

/// The two class covariances of one synthetic subject.
#[derive(Debug, Clone)]
pub struct ClassCovariances {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

fn unit_vector(c: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::<f64>::from_fn(c, |_, _| StandardNormal.sample(rng));
    let n = v.norm();
    v / n
}

pub fn class_covariances(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<ClassCovariances> {
    let c = spec.channels;
    let a = DMatrix::<f64>::from_fn(c, c, |_, _| StandardNormal.sample(rng));
    let base = &a * a.transpose() / c as f64 + DMatrix::identity(c, c);
    let nu = base.trace() / c as f64;
    let u = unit_vector(c, rng);
    let v = unit_vector(c, rng);
    let right = &base + &u * u.transpose() * (spec.strength * nu);
    let left = &base + &v * v.transpose() * (spec.strength * nu);
    for m in [&left, &right] {
        if m.clone().cholesky().is_none() {
            return invalid(format!(
                "perturbation strength {} makes a class covariance indefinite",
                spec.strength
            ));
        }
    }
    Ok(ClassCovariances { left, right })
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64);
    rng
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.n_subjects == 0 || spec.channels < 2 {
        return invalid("need at least one subject and two channels");
    }
    if !(spec.fs > 0.0 && spec.minutes > 0.0 && spec.trial_minutes > 0.0) {
        return invalid("fs, minutes and trial_minutes must be positive");
    }
    if !(spec.noise >= 0.0) || !spec.strength.is_finite() {
        return invalid("noise must be non-negative and strength finite");
    }
    Ok(())
}

/// Generates one subject; deterministic in `(spec.seed, index)`.
pub fn generate_subject(spec: &SynthSpec, index: usize) -> Result<Recording> {
    validate(spec)?;
    let mut rng = subject_rng(spec.seed, index);
    let covs = class_covariances(spec, &mut rng)?;
    let chol_left = covs.left.clone().cholesky().expect("checked above").l();
    let chol_right = covs.right.clone().cholesky().expect("checked above").l();
    let nu = covs.left.trace() / spec.channels as f64;
    let noise_sd = spec.noise * nu.sqrt();

    let c = spec.channels;
    let n = (spec.minutes * 60.0 * spec.fs).round() as usize;
    let trial_len = ((spec.trial_minutes * 60.0 * spec.fs).round() as usize).max(1);
    let mut label = if rng.random::<bool>() {
        Label::Right
    } else {
        Label::Left
    };
    let mut data = DMatrix::zeros(c, n);
    let mut trials = Vec::new();
    let mut start = 0;
    let mut z = DVector::zeros(c);
    while start < n {
        let end = (start + trial_len).min(n);
        let l = if label == Label::Right { &chol_right } else { &chol_left };
        for t in start..end {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let x = l * &z;
            for ch in 0..c {
                let e: f64 = StandardNormal.sample(&mut rng);
                data[(ch, t)] = x[ch] + noise_sd * e;
            }
        }
        trials.push(Trial {
            start_sample: start,
            end_sample: end,
            label,
        });
        label = label.flipped();
        start = end;
    }
    let rec = Recording::new(format!("synth{index:02}"), data, spec.fs, trials)?;
    let filter = design_butterworth_bandpass(8, spec.band_low_hz, spec.band_high_hz, spec.fs)?;
    filter_forward(&filter, &rec)
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<Recording>> {
    validate(spec)?;
    (0..spec.n_subjects).map(|i| generate_subject(spec, i)).collect()
}
