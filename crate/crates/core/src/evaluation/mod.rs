//! Evaluation protocol: ten-fold cross-validation over decision-window
//! lengths, binomial significance thresholds and the minimal expected
//! switch duration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod cv;
pub mod mesd;
pub mod significance;

pub use cv::{assign_folds, ten_fold_cv, CvOptions, CvOutcome, FoldAudit, N_FOLDS};
pub use mesd::{expected_hitting_time, mesd, MesdResult};
pub use significance::{significance_threshold, Significance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RGC")]
    Rgc,
    #[serde(rename = "CSP")]
    Csp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rgc => "RGC",
            Method::Csp => "CSP",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RGC" => Ok(Method::Rgc),
            "CSP" => Ok(Method::Csp),
            _ => Err(format!("unknown method '{s}' (RGC | CSP)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub window_s: f64,
    pub accuracy: f64,
    pub n_decisions: usize,
    pub n_correct: usize,
}

/// Accuracy per decision-window length for one subject and method, sorted
/// by decreasing window length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub subject: String,
    pub method: Method,
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn point(&self, window_s: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| (p.window_s - window_s).abs() < 1e-9)
    }
}
