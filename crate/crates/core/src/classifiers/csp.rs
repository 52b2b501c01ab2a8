//! Common spatial patterns with log-variance features and an LDA readout.

use nalgebra::DMatrix;

use crate::covariance::{shrinkage_covariance, EegSegment, Label};
use crate::error::{invalid, Result};
use crate::spd::{inv_sqrt, sym_eig, SpdMatrix, SymmetricMatrix};

use super::lda::train_lda;
use super::LinearDecisionFunction;

/// Floor for output variances before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-20;

/// Spatial filters as columns, normalized so `wᵀ(R₊ + R₋)w = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CspFilters {
    pub filters: DMatrix<f64>,
    /// Generalized eigenvalues `wᵀR₊w` of the selected filters.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CspModel {
    pub filters: CspFilters,
    pub lda: LinearDecisionFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CspFeatures {
    pub values: Vec<f64>,
    /// True when at least one output variance hit [`VARIANCE_FLOOR`].
    pub clamped: bool,
}

/// Generalized eigenvectors of `(R₊, R₊ + R₋)`, keeping `n_filters / 2` from
/// each end of the spectrum. Columns are ordered by descending eigenvalue.
pub fn csp_from_class_covariances(r_pos: &SpdMatrix, r_neg: &SpdMatrix, n_filters: usize) -> Result<CspFilters> {
    let c = r_pos.dim();
    if r_neg.dim() != c {
        return invalid("class covariances differ in dimension");
    }
    if n_filters == 0 || !n_filters.is_multiple_of(2) || n_filters > c {
        return invalid(format!("n_filters must be even and in [2, {c}], got {n_filters}"));
    }
    let composite = SpdMatrix::new(r_pos.as_matrix() + r_neg.as_matrix())?;
    let whitening = inv_sqrt(&composite)?;
    let w = whitening.as_matrix();
    let eig = sym_eig(&SymmetricMatrix::new(w * r_pos.as_matrix() * w)?)?;
    let half = n_filters / 2;
    let picks: Vec<usize> = (0..half).chain(c - half..c).collect();
    let mut filters = DMatrix::zeros(c, n_filters);
    for (k, &idx) in picks.iter().enumerate() {
        filters.set_column(k, &(w * eig.eigenvectors.column(idx)));
    }
    Ok(CspFilters {
        filters,
        eigenvalues: picks.iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

fn class_mean_covariance(segments: &[EegSegment], class: Label) -> Result<SpdMatrix> {
    let mut acc: Option<DMatrix<f64>> = None;
    let mut n = 0usize;
    for s in segments.iter().filter(|s| s.label == Some(class)) {
        let cov = shrinkage_covariance(s)?.covariance.into_matrix();
        acc = Some(match acc {
            Some(a) => a + cov,
            None => cov,
        });
        n += 1;
    }
    match acc {
        Some(a) => SpdMatrix::new(a / n as f64),
        None => invalid(format!("no training segment of class {class:?}")),
    }
}

/// CSP filters from the per-class mean of shrinkage covariances.
pub fn train_csp(train: &[EegSegment], n_filters: usize) -> Result<CspFilters> {
    check_channels(train)?;
    let r_pos = class_mean_covariance(train, Label::Right)?;
    let r_neg = class_mean_covariance(train, Label::Left)?;
    csp_from_class_covariances(&r_pos, &r_neg, n_filters)
}

fn check_channels(segments: &[EegSegment]) -> Result<()> {
    let Some(first) = segments.first() else {
        return invalid("empty training set");
    };
    if segments.iter().any(|s| s.channels() != first.channels()) {
        return invalid("training segments have mixed channel counts");
    }
    Ok(())
}

/// `ln var(w_iᵀ X)` per filter, variance with mean removal over the window.
pub fn csp_features(filters: &CspFilters, x: &EegSegment) -> Result<CspFeatures> {
    if x.channels() != filters.filters.nrows() {
        return invalid(format!(
            "segment has {} channels, filters expect {}",
            x.channels(),
            filters.filters.nrows()
        ));
    }
    let projected = filters.filters.transpose() * x.data();
    let t = projected.ncols() as f64;
    let mut clamped = false;
    let values = projected
        .row_iter()
        .map(|row| {
            let mean = row.mean();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
            if var < VARIANCE_FLOOR {
                clamped = true;
                VARIANCE_FLOOR.ln()
            } else {
                var.ln()
            }
        })
        .collect();
    Ok(CspFeatures { values, clamped })
}

/// Filters from `filter_train` (long segments), LDA from the log-variance
/// features of `window_train`.
pub fn train_csp_lda(filter_train: &[EegSegment], window_train: &[EegSegment], n_filters: usize) -> Result<CspModel> {
    let filters = train_csp(filter_train, n_filters)?;
    let mut feats = Vec::with_capacity(window_train.len());
    let mut labels = Vec::with_capacity(window_train.len());
    for w in window_train {
        let Some(l) = w.label else {
            return invalid("unlabeled training window");
        };
        feats.push(csp_features(&filters, w)?.values);
        labels.push(l);
    }
    let lda = train_lda(&feats, &labels)?.function;
    Ok(CspModel { filters, lda })
}

impl CspModel {
    pub fn decision_value(&self, x: &EegSegment) -> Result<f64> {
        Ok(self.lda.decision(&csp_features(&self.filters, x)?.values))
    }

    pub fn classify(&self, x: &EegSegment) -> Result<Label> {
        Ok(Label::from_score(self.decision_value(x)?))
    }
}
