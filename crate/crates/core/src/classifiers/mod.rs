//! Trainable models: the Riemannian classifier (tangent features + linear
//! SVM) and the CSP + LDA baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::Label;

pub mod archive;
pub mod csp;
pub mod lda;
pub mod rgc;
pub mod svm;

pub use archive::{ModelArchive, MODEL_FORMAT_VERSION};
pub use csp::{csp_features, csp_from_class_covariances, train_csp, train_csp_lda, CspFeatures, CspFilters, CspModel};
pub use lda::{train_lda, LdaFit};
pub use rgc::{classify_rgc, train_rgc, train_rgc_from_covariances, window_covariance, RgcConfig, RgcModel};
pub use svm::{train_linear_svm, SvmFit, SvmOptions};

/// `D(f) = wᵀf + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDecisionFunction {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearDecisionFunction {
    pub fn decision(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.weights.len());
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// Sign of the decision value; exactly zero counts as `Right`.
    pub fn classify(&self, f: &[f64]) -> Label {
        Label::from_score(self.decision(f))
    }
}

/// Which reference point to use for the tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MeanEstimator {
    #[default]
    LogEuclidean,
    Iterative,
}

impl FromStr for MeanEstimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log-euclidean" | "log_euclidean" => Ok(Self::LogEuclidean),
            "iterative" => Ok(Self::Iterative),
            other => Err(format!("unknown mean estimator '{other}' (log-euclidean | iterative)")),
        }
    }
}

impl fmt::Display for MeanEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LogEuclidean => "log-euclidean",
            Self::Iterative => "iterative",
        })
    }
}

/// SVM cost: a fixed value or an inner 5-fold search over
/// [`rgc::SVM_C_GRID`]. Serialized as a number or the string `"grid"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvmCPolicy {
    Fixed(f64),
    GridSearch,
}

impl Default for SvmCPolicy {
    fn default() -> Self {
        Self::Fixed(1.0)
    }
}

impl FromStr for SvmCPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "grid" {
            return Ok(Self::GridSearch);
        }
        match s.parse::<f64>() {
            Ok(c) if c > 0.0 && c.is_finite() => Ok(Self::Fixed(c)),
            _ => Err(format!("svm_c must be a positive number or 'grid', got '{s}'")),
        }
    }
}

impl fmt::Display for SvmCPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(c) => write!(f, "{c}"),
            Self::GridSearch => f.write_str("grid"),
        }
    }
}

impl Serialize for SvmCPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Fixed(c) => s.serialize_f64(*c),
            Self::GridSearch => s.serialize_str("grid"),
        }
    }
}

impl<'de> Deserialize<'de> for SvmCPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => c.to_string().parse().map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
