//! Riemannian geometry classifier: shrinkage covariances, a reference mean
//! over all training covariances, tangent-space features and a linear SVM.

use rayon::prelude::*;

use crate::covariance::{shrinkage_covariance, EegSegment, Label};
use crate::error::{invalid, Result};
use crate::spd::{
    half_vectorized_len, log_euclidean_mean, riemannian_mean_iterative, KarcherOptions, SpdMatrix, TangentSpace,
};

use super::svm::{train_linear_svm, SvmOptions};
use super::{LinearDecisionFunction, MeanEstimator, SvmCPolicy};

/// Candidate costs for the inner grid search.
pub const SVM_C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
const INNER_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgcConfig {
    pub svm_c: SvmCPolicy,
    pub mean: MeanEstimator,
    pub karcher: KarcherOptions,
}

impl Default for RgcConfig {
    fn default() -> Self {
        Self {
            svm_c: SvmCPolicy::Fixed(1.0),
            mean: MeanEstimator::LogEuclidean,
            karcher: KarcherOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RgcModel {
    tangent: TangentSpace,
    pub svm: LinearDecisionFunction,
    /// SVM cost actually used (relevant under grid search).
    pub svm_c: f64,
    pub low_confidence: bool,
}

impl RgcModel {
    pub fn from_parts(reference_mean: SpdMatrix, svm: LinearDecisionFunction, svm_c: f64) -> Result<Self> {
        if svm.weights.len() != half_vectorized_len(reference_mean.dim()) {
            return invalid(format!(
                "decision function has {} weights, expected {}",
                svm.weights.len(),
                half_vectorized_len(reference_mean.dim())
            ));
        }
        Ok(Self {
            tangent: TangentSpace::new(reference_mean)?,
            svm,
            svm_c,
            low_confidence: false,
        })
    }

    pub fn reference_mean(&self) -> &SpdMatrix {
        self.tangent.reference()
    }

    pub fn channels(&self) -> usize {
        self.tangent.dim()
    }

    pub fn feature_dim(&self) -> usize {
        half_vectorized_len(self.channels())
    }

    pub fn features(&self, covariance: &SpdMatrix) -> Result<Vec<f64>> {
        self.tangent.features(covariance)
    }

    pub fn decision_value_covariance(&self, covariance: &SpdMatrix) -> Result<f64> {
        Ok(self.svm.decision(&self.features(covariance)?))
    }

    pub fn classify_covariance(&self, covariance: &SpdMatrix) -> Result<Label> {
        Ok(Label::from_score(self.decision_value_covariance(covariance)?))
    }

    pub fn decision_value(&self, x: &EegSegment) -> Result<f64> {
        if x.channels() != self.channels() {
            return invalid(format!(
                "segment has {} channels, model expects {}",
                x.channels(),
                self.channels()
            ));
        }
        self.decision_value_covariance(&shrinkage_covariance(x)?.spd()?)
    }
}

/// Regularized covariance of a window, as used for both training and test.
pub fn window_covariance(x: &EegSegment) -> Result<SpdMatrix> {
    shrinkage_covariance(x)?.spd()
}

/// Trains on labeled segments (or decision windows).
pub fn train_rgc(train: &[EegSegment], config: &RgcConfig) -> Result<RgcModel> {
    let Some(first) = train.first() else {
        return invalid("empty training set");
    };
    if train.iter().any(|s| s.channels() != first.channels()) {
        return invalid("training segments have mixed channel counts");
    }
    let mut labels = Vec::with_capacity(train.len());
    for s in train {
        match s.label {
            Some(l) => labels.push(l),
            None => return invalid("unlabeled training segment"),
        }
    }
    let covs: Vec<SpdMatrix> = train.par_iter().map(window_covariance).collect::<Result<_>>()?;
    let groups: Vec<usize> = train.iter().map(|s| s.source).collect();
    train_rgc_from_covariances(&covs, &labels, &groups, config)
}

/// Trains from precomputed window covariances. `groups` holds the source
/// segment of every window and keeps siblings together in the inner folds
/// of the cost grid search.
pub fn train_rgc_from_covariances(
    covs: &[SpdMatrix],
    labels: &[Label],
    groups: &[usize],
    config: &RgcConfig,
) -> Result<RgcModel> {
    if covs.len() != labels.len() || covs.len() != groups.len() {
        return invalid("covariances, labels and groups differ in length");
    }
    if !labels.contains(&Label::Left) || !labels.contains(&Label::Right) {
        return invalid("RGC training needs both classes");
    }
    let reference = match config.mean {
        MeanEstimator::LogEuclidean => log_euclidean_mean(covs)?,
        MeanEstimator::Iterative => riemannian_mean_iterative(covs, config.karcher)?.mean,
    };
    let tangent = TangentSpace::new(reference)?;
    let features: Vec<Vec<f64>> = covs.par_iter().map(|c| tangent.features(c)).collect::<Result<_>>()?;

    let c = match config.svm_c {
        SvmCPolicy::Fixed(c) => c,
        SvmCPolicy::GridSearch => select_cost(&features, labels, groups)?,
    };
    let fit = train_linear_svm(&features, labels, SvmOptions::with_c(c))?;
    if !fit.converged {
        log::warn!("SVM stopped with duality gap {:e}", fit.duality_gap());
    }
    Ok(RgcModel {
        tangent,
        svm: fit.function,
        svm_c: c,
        low_confidence: fit.low_confidence,
    })
}

fn select_cost(features: &[Vec<f64>], labels: &[Label], groups: &[usize]) -> Result<f64> {
    let mut best = (f64::NEG_INFINITY, SVM_C_GRID[0]);
    for &c in &SVM_C_GRID {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..INNER_FOLDS {
            let (mut tr_f, mut tr_l, mut te) = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..features.len() {
                if groups[k] % INNER_FOLDS == fold {
                    te.push(k);
                } else {
                    tr_f.push(features[k].clone());
                    tr_l.push(labels[k]);
                }
            }
            if te.is_empty() || !tr_l.contains(&Label::Left) || !tr_l.contains(&Label::Right) {
                continue;
            }
            let fit = train_linear_svm(&tr_f, &tr_l, SvmOptions::with_c(c))?;
            correct += te
                .iter()
                .filter(|&&k| fit.function.classify(&features[k]) == labels[k])
                .count();
            total += te.len();
        }
        if total > 0 {
            let acc = correct as f64 / total as f64;
            if acc > best.0 {
                best = (acc, c);
            }
        }
    }
    Ok(best.1)
}

/// Label for one window: covariance, tangent features, sign of the SVM.
pub fn classify_rgc(model: &RgcModel, x: &EegSegment) -> Result<Label> {
    Ok(Label::from_score(model.decision_value(x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(n_per_class: usize, c: usize, t: usize, seed: u64) -> Vec<EegSegment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for k in 0..2 * n_per_class {
            let label = if k % 2 == 0 { Label::Right } else { Label::Left };
            let mut scale = DVector::from_element(c, 1.0);
            scale[if label == Label::Right { 0 } else { 1 }] = 2f64.sqrt();
            let x = DMatrix::from_fn(c, t, |i, _| {
                scale[i] * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            });
            out.push(EegSegment::new(x, 64.0, Some(label)).unwrap().with_source(k));
        }
        out
    }

    #[test]
    fn separable_classes_train_well() {
        let train = synthetic(100, 4, 3840, 1);
        let model = train_rgc(&train, &RgcConfig::default()).unwrap();
        assert_eq!(model.feature_dim(), 10);
        let correct = train
            .iter()
            .filter(|s| classify_rgc(&model, s).unwrap() == s.label.unwrap())
            .count();
        assert!(correct as f64 / train.len() as f64 >= 0.95);

        let test = synthetic(50, 4, 3840, 2);
        let correct = test
            .iter()
            .filter(|s| classify_rgc(&model, s).unwrap() == s.label.unwrap())
            .count();
        assert!(correct as f64 / test.len() as f64 >= 0.95);
    }

    #[test]
    fn training_is_deterministic_and_duplication_invariant() {
        let train = synthetic(20, 3, 2000, 3);
        let config = RgcConfig {
            svm_c: SvmCPolicy::Fixed(1e4),
            ..RgcConfig::default()
        };
        let a = train_rgc(&train, &config).unwrap();
        let b = train_rgc(&train, &config).unwrap();
        assert_eq!(a.svm, b.svm);
        assert_eq!(a.reference_mean(), b.reference_mean());

        let doubled: Vec<_> = train.iter().chain(train.iter()).cloned().collect();
        let d = train_rgc(&doubled, &config).unwrap();
        let diff = (a.reference_mean().as_matrix() - d.reference_mean().as_matrix()).norm();
        assert!(diff < 1e-12);
        // with a cost this large the fit is the hard-margin one, which does
        // not move when every point is repeated
        for (x, y) in a.svm.weights.iter().zip(&d.svm.weights) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }

    #[test]
    fn channel_mismatch_and_single_class() {
        let train = synthetic(5, 3, 500, 4);
        let model = train_rgc(&train, &RgcConfig::default()).unwrap();
        let wrong = EegSegment::new(DMatrix::from_element(4, 100, 1.0), 64.0, None).unwrap();
        assert!(classify_rgc(&model, &wrong).is_err());
        let one_class: Vec<_> = train.into_iter().filter(|s| s.label == Some(Label::Left)).collect();
        assert!(train_rgc(&one_class, &RgcConfig::default()).is_err());
    }

    #[test]
    fn zero_decision_maps_to_positive_class() {
        let model = RgcModel::from_parts(
            SpdMatrix::identity(2),
            LinearDecisionFunction {
                weights: vec![0.0; 3],
                bias: 0.0,
            },
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(2, 64, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let seg = EegSegment::new(x, 64.0, None).unwrap();
        assert_eq!(model.decision_value(&seg).unwrap(), 0.0);
        assert_eq!(classify_rgc(&model, &seg).unwrap(), Label::Right);
    }

    #[test]
    fn iterative_mean_and_grid_search_configs_train() {
        let train = synthetic(10, 3, 1000, 6);
        let config = RgcConfig {
            svm_c: SvmCPolicy::GridSearch,
            mean: MeanEstimator::Iterative,
            ..RgcConfig::default()
        };
        let model = train_rgc(&train, &config).unwrap();
        assert!(SVM_C_GRID.contains(&model.svm_c));
    }
}
