//! Decoding the directional focus of auditory attention from EEG with
//! Riemannian geometry.
//!
//! Pipeline for a single decision window `X` (channels × samples):
//!
//! ```text
//!   X ─ bandpass 12–30 Hz ─ covariance + Ledoit-Wolf shrinkage ─ R
//!   R ─ log(G^{-1/2} R G^{-1/2}) ─ half-vectorize ─ f
//!   f ─ sign(wᵀf + b) ─ left / right
//! ```
//!
//! `G` is the mean of all training covariances and `(w, b)` a linear SVM
//! trained on the tangent features. A CSP + LDA baseline and the
//! cross-validation protocol (accuracy per decision-window length,
//! binomial significance, minimal expected switch duration) are included.
//!
//! Modules:
//! - [`spd`]: matrix functions and Riemannian geometry on SPD matrices
//! - [`covariance`]: sample and shrinkage covariance of EEG windows
//! - [`sigproc`]: bandpass, decimation, segmentation, windowing
//! - [`classifiers`]: RGC, CSP, SVM and LDA
//! - [`evaluation`]: cross-validation, significance and MESD
//! - [`dataset`], [`synth`], [`experiment`]: file formats, synthetic data and
//!   end-to-end experiment runs

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod covariance;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod sigproc;
pub mod spd;
pub mod synth;

pub use covariance::{EegSegment, Label};
pub use error::{Error, Result};
pub use sigproc::Recording;
