//! Covariance estimation for EEG windows, with Ledoit-Wolf shrinkage toward
//! a scaled identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spd::{SpdMatrix, SymmetricMatrix};

/// Attended direction. `Left` is the −1 class and `Right` the +1 class;
/// serialized as the integers −1 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Left,
    Right,
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.sign() as i64)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_sign(v).ok_or_else(|| serde::de::Error::custom(format!("label must be -1 or 1, got {v}")))
    }
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Left => -1.0,
            Label::Right => 1.0,
        }
    }

    pub fn from_sign(v: i64) -> Option<Label> {
        match v {
            -1 => Some(Label::Left),
            1 => Some(Label::Right),
            _ => None,
        }
    }

    /// Decision rule for a real-valued score; zero maps to `Right`.
    pub fn from_score(score: f64) -> Label {
        if score >= 0.0 {
            Label::Right
        } else {
            Label::Left
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Left => Label::Right,
            Label::Right => Label::Left,
        }
    }
}

/// A block of multichannel EEG, channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EegSegment {
    data: DMatrix<f64>,
    fs: f64,
    pub label: Option<Label>,
    /// Index of the 60 s segment this data was cut from; windows inherit it.
    pub source: usize,
}

impl EegSegment {
    pub fn new(data: DMatrix<f64>, fs: f64, label: Option<Label>) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() < 2 {
            return invalid(format!(
                "segment needs at least 2 channels and 2 samples, got {}x{}",
                data.nrows(),
                data.ncols()
            ));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return invalid(format!("sampling rate must be positive, got {fs}"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("segment has non-finite samples");
        }
        Ok(Self {
            data,
            fs,
            label,
            source: 0,
        })
    }

    pub fn with_source(mut self, source: usize) -> Self {
        self.source = source;
        self
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn duration_s(&self) -> f64 {
        self.samples() as f64 / self.fs
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// `X Xᵀ / (T − 1)`, without mean removal.
pub fn sample_covariance(x: &EegSegment) -> Result<SymmetricMatrix> {
    scatter(x.data())
}

fn scatter(x: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let t = x.ncols();
    if t < 2 {
        return invalid(format!("covariance needs at least 2 samples, got {t}"));
    }
    Ok(SymmetricMatrix::from_rounded(x * x.transpose() / (t as f64 - 1.0)))
}

#[derive(Debug, Clone)]
pub struct ShrinkageResult {
    /// `ρ ν I + (1 − ρ) S`. Positive definite whenever `intensity > 0` and
    /// the data is not identically zero.
    pub covariance: SymmetricMatrix,
    /// Shrinkage intensity ρ in [0, 1].
    pub intensity: f64,
    /// ν = trace(S) / C.
    pub target_scale: f64,
}

impl ShrinkageResult {
    /// Equivalent additive ridge `δ = ρ ν` applied on top of `(1 − ρ) S`.
    pub fn ridge(&self) -> f64 {
        self.intensity * self.target_scale
    }

    pub fn spd(&self) -> Result<SpdMatrix> {
        self.covariance.clone().into_spd()
    }
}

/// Ledoit-Wolf shrinkage of the sample covariance of a segment.
pub fn shrinkage_covariance(x: &EegSegment) -> Result<ShrinkageResult> {
    ledoit_wolf(x.data())
}

/// Ledoit-Wolf shrinkage for an arbitrary variables × observations matrix.
/// Observations are used as given (no centering).
pub fn ledoit_wolf(x: &DMatrix<f64>) -> Result<ShrinkageResult> {
    let s = scatter(x)?;
    let c = x.nrows() as f64;
    let t = x.ncols() as f64;
    let sm = s.as_matrix();
    let nu = s.trace() / c;

    let s_norm2 = sm.norm_squared();
    // ‖S − νI‖²_F = ‖S‖²_F − 2ν tr S + C ν²
    let d2 = ((s_norm2 - 2.0 * nu * s.trace() + c * nu * nu) / c).max(0.0);

    // Σ_t ‖x_t x_tᵀ − S‖²_F = Σ_t ‖x_t‖⁴ − 2 Σ_t x_tᵀ S x_t + T ‖S‖²_F
    // and Σ_t x_tᵀ S x_t = (T − 1) ‖S‖²_F.
    let fourth: f64 = x.column_iter().map(|col| col.norm_squared().powi(2)).sum();
    let spread = (fourth - (t - 2.0) * s_norm2).max(0.0);
    let b2 = (spread / (t * t * c)).min(d2);

    let intensity = if d2 > 0.0 { (b2 / d2).clamp(0.0, 1.0) } else { 0.0 };
    let mut cov = sm * (1.0 - intensity);
    for i in 0..x.nrows() {
        cov[(i, i)] += intensity * nu;
    }
    Ok(ShrinkageResult {
        covariance: SymmetricMatrix::from_rounded(cov),
        intensity,
        target_scale: nu,
    })
}
