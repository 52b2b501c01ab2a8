//! Ten-fold cross-validation at segment granularity. Folds are drawn once
//! per call; for every decision-window length the models are retrained on
//! windows cut from the training segments and tested on windows of the
//! held-out segments.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifiers::{train_csp_lda, train_rgc_from_covariances, window_covariance, RgcConfig};
use crate::covariance::{EegSegment, Label};
use crate::error::{invalid, Error, Result};
use crate::sigproc::split_windows;
use crate::spd::SpdMatrix;

use super::{AccuracyCurve, CurvePoint, Method};

pub const N_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub seed: u64,
    pub rgc: RgcConfig,
    pub csp_filters: usize,
    pub subject: String,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            rgc: RgcConfig::default(),
            csp_filters: 6,
            subject: String::new(),
        }
    }
}

/// Segment ids (positions in the input list) that fed one fold's model and
/// test set at one window length.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAudit {
    pub window_s: f64,
    pub fold: usize,
    pub train_sources: BTreeSet<usize>,
    pub test_sources: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub curve: AccuracyCurve,
    /// Fold index of every input segment.
    pub folds: Vec<usize>,
    pub audit: Vec<FoldAudit>,
}

/// Shuffles segment indices with `seed` and deals them round-robin into
/// [`N_FOLDS`] folds, so fold sizes differ by at most one.
pub fn assign_folds(n_segments: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_segments).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n_segments];
    for (pos, &idx) in order.iter().enumerate() {
        folds[idx] = pos % N_FOLDS;
    }
    folds
}

fn folds_are_trainable(folds: &[usize], labels: &[Label]) -> bool {
    (0..N_FOLDS).all(|f| {
        let train = || folds.iter().zip(labels).filter(move |(&g, _)| g != f).map(|(_, l)| *l);
        train().any(|l| l == Label::Left) && train().any(|l| l == Label::Right)
    })
}

struct Windows {
    windows: Vec<EegSegment>,
    covs: Option<Vec<SpdMatrix>>,
}

/// Ten-fold CV accuracy of `method` for each window length in `window_lengths`.
pub fn ten_fold_cv(
    segments: &[EegSegment],
    window_lengths: &[f64],
    method: Method,
    opts: &CvOptions,
) -> Result<CvOutcome> {
    if segments.len() < N_FOLDS {
        return invalid(format!("need at least {N_FOLDS} segments, got {}", segments.len()));
    }
    if window_lengths.is_empty() {
        return invalid("no window lengths given");
    }
    let mut labels = Vec::with_capacity(segments.len());
    for s in segments {
        labels.push(s.label.ok_or_else(|| Error::InvalidInput("unlabeled segment".into()))?);
    }
    let segments: Vec<EegSegment> = segments
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| s.with_source(i))
        .collect();

    let mut folds = assign_folds(segments.len(), opts.seed);
    if !folds_are_trainable(&folds, &labels) {
        folds = assign_folds(segments.len(), opts.seed.wrapping_add(1));
        if !folds_are_trainable(&folds, &labels) {
            return Err(Error::Protocol(
                "a fold's training portion lacks one class after reshuffling".into(),
            ));
        }
    }

    let mut lengths = window_lengths.to_vec();
    lengths.sort_by(|a, b| b.total_cmp(a));
    lengths.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut points = Vec::with_capacity(lengths.len());
    let mut audit = Vec::new();
    for &tau in &lengths {
        let windows = cut_windows(&segments, tau, method)?;
        let per_fold: Vec<(usize, usize, FoldAudit)> = (0..N_FOLDS)
            .into_par_iter()
            .map(|fold| run_fold(&segments, &folds, &windows, fold, tau, method, opts))
            .collect::<Result<_>>()?;
        let (mut correct, mut total) = (0, 0);
        for (c, t, a) in per_fold {
            correct += c;
            total += t;
            audit.push(a);
        }
        if total == 0 {
            return invalid(format!("no test decisions at window length {tau} s"));
        }
        points.push(CurvePoint {
            window_s: tau,
            accuracy: correct as f64 / total as f64,
            n_decisions: total,
            n_correct: correct,
        });
    }

    Ok(CvOutcome {
        curve: AccuracyCurve {
            subject: opts.subject.clone(),
            method,
            points,
        },
        folds,
        audit,
    })
}

fn cut_windows(segments: &[EegSegment], tau: f64, method: Method) -> Result<Windows> {
    let per_segment: Vec<Vec<EegSegment>> = segments
        .par_iter()
        .map(|s| split_windows(s, tau))
        .collect::<Result<_>>()?;
    let windows: Vec<EegSegment> = per_segment.into_iter().flatten().collect();
    let covs = match method {
        Method::Rgc => Some(windows.par_iter().map(window_covariance).collect::<Result<Vec<_>>>()?),
        Method::Csp => None,
    };
    Ok(Windows { windows, covs })
}

fn run_fold(
    segments: &[EegSegment],
    folds: &[usize],
    w: &Windows,
    fold: usize,
    tau: f64,
    method: Method,
    opts: &CvOptions,
) -> Result<(usize, usize, FoldAudit)> {
    let is_test = |s: &EegSegment| folds[s.source] == fold;
    let train_idx: Vec<usize> = (0..w.windows.len()).filter(|&i| !is_test(&w.windows[i])).collect();
    let test_idx: Vec<usize> = (0..w.windows.len()).filter(|&i| is_test(&w.windows[i])).collect();
    let label_of = |i: usize| w.windows[i].label.expect("segments are labeled");

    let correct = match method {
        Method::Rgc => {
            let covs = w.covs.as_ref().expect("covariances are cut for RGC");
            let train_covs: Vec<SpdMatrix> = train_idx.iter().map(|&i| covs[i].clone()).collect();
            let train_labels: Vec<Label> = train_idx.iter().map(|&i| label_of(i)).collect();
            let groups: Vec<usize> = train_idx.iter().map(|&i| w.windows[i].source).collect();
            let model = train_rgc_from_covariances(&train_covs, &train_labels, &groups, &opts.rgc)?;
            let mut correct = 0;
            for &i in &test_idx {
                if model.classify_covariance(&covs[i])? == label_of(i) {
                    correct += 1;
                }
            }
            correct
        }
        Method::Csp => {
            let filter_train: Vec<EegSegment> = segments.iter().filter(|s| !is_test(s)).cloned().collect();
            let window_train: Vec<EegSegment> = train_idx.iter().map(|&i| w.windows[i].clone()).collect();
            let model = train_csp_lda(&filter_train, &window_train, opts.csp_filters)?;
            let mut correct = 0;
            for &i in &test_idx {
                if model.classify(&w.windows[i])? == label_of(i) {
                    correct += 1;
                }
            }
            correct
        }
    };

    let audit = FoldAudit {
        window_s: tau,
        fold,
        train_sources: train_idx.iter().map(|&i| w.windows[i].source).collect(),
        test_sources: test_idx.iter().map(|&i| w.windows[i].source).collect(),
    };
    Ok((correct, test_idx.len(), audit))
}
