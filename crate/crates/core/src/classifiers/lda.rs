//! Two-class linear discriminant with a Ledoit-Wolf pooled covariance.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{ledoit_wolf, Label};
use crate::error::{invalid, Error, Result};

use super::LinearDecisionFunction;

#[derive(Debug, Clone)]
pub struct LdaFit {
    pub function: LinearDecisionFunction,
    /// Set when the class means coincide and the discriminant is empty.
    pub low_confidence: bool,
}

/// `w = Σ⁻¹(μ₊ − μ₋)`, `b = −wᵀ(μ₊ + μ₋)/2`, with Σ the shrinkage estimate
/// of the within-class scatter.
pub fn train_lda(features: &[Vec<f64>], labels: &[Label]) -> Result<LdaFit> {
    if features.len() != labels.len() {
        return invalid(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        ));
    }
    let dim = features.first().map_or(0, Vec::len);
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return invalid("feature vectors must be non-empty and of equal length");
    }
    let mean_of = |class: Label| -> Option<DVector<f64>> {
        let mut acc = DVector::zeros(dim);
        let mut n = 0usize;
        for (f, _) in features.iter().zip(labels).filter(|(_, &l)| l == class) {
            acc += DVector::from_column_slice(f);
            n += 1;
        }
        (n > 0).then(|| acc / n as f64)
    };
    let (Some(mu_pos), Some(mu_neg)) = (mean_of(Label::Right), mean_of(Label::Left)) else {
        return invalid("LDA training needs at least one example of each class");
    };
    if features.len() < 3 {
        return invalid("LDA training needs at least three examples");
    }

    let centered = DMatrix::from_fn(dim, features.len(), |i, k| {
        let mu = if labels[k] == Label::Right { &mu_pos } else { &mu_neg };
        features[k][i] - mu[i]
    });
    let pooled = ledoit_wolf(&centered)?.covariance.into_matrix();
    let diff = &mu_pos - &mu_neg;
    let scale = mu_pos.norm().max(mu_neg.norm()).max(1.0);
    let low_confidence = diff.norm() < 1e-10 * scale;

    let chol = pooled
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("pooled feature covariance is singular".into()))?;
    let w = chol.solve(&diff);
    let bias = -w.dot(&(&mu_pos + &mu_neg)) / 2.0;
    Ok(LdaFit {
        function: LinearDecisionFunction {
            weights: w.iter().copied().collect(),
            bias,
        },
        low_confidence,
    })
}
