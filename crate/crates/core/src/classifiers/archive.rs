//! Self-describing JSON archive for trained models. Matrices are stored
//! row-major as 64-bit floats alongside their dimensions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

use super::{CspFilters, CspModel, LinearDecisionFunction, RgcModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: ArchivedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchivedModel {
    Rgc {
        channels: usize,
        reference_mean: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
        svm_c: f64,
    },
    Csp {
        channels: usize,
        n_filters: usize,
        filters: Vec<f64>,
        eigenvalues: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
    },
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn from_row_major(rows: usize, cols: usize, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Format(format!(
            "expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

impl From<&RgcModel> for ModelArchive {
    fn from(m: &RgcModel) -> Self {
        ModelArchive {
            format_version: MODEL_FORMAT_VERSION,
            model: ArchivedModel::Rgc {
                channels: m.channels(),
                reference_mean: row_major(m.reference_mean().as_matrix()),
                weights: m.svm.weights.clone(),
                bias: m.svm.bias,
                svm_c: m.svm_c,
            },
        }
    }
}

impl From<&CspModel> for ModelArchive {
    fn from(m: &CspModel) -> Self {
        ModelArchive {
            format_version: MODEL_FORMAT_VERSION,
            model: ArchivedModel::Csp {
                channels: m.filters.filters.nrows(),
                n_filters: m.filters.filters.ncols(),
                filters: row_major(&m.filters.filters),
                eigenvalues: m.filters.eigenvalues.clone(),
                weights: m.lda.weights.clone(),
                bias: m.lda.bias,
            },
        }
    }
}

impl ModelArchive {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let archive: ModelArchive = serde_json::from_str(s)?;
        if archive.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                archive.format_version
            )));
        }
        Ok(archive)
    }

    pub fn into_rgc(self) -> Result<RgcModel> {
        match self.model {
            ArchivedModel::Rgc {
                channels,
                reference_mean,
                weights,
                bias,
                svm_c,
            } => {
                let mean = SpdMatrix::new(from_row_major(channels, channels, &reference_mean)?)?;
                RgcModel::from_parts(mean, LinearDecisionFunction { weights, bias }, svm_c)
            }
            ArchivedModel::Csp { .. } => Err(Error::Format("archive holds a CSP model".into())),
        }
    }

    pub fn into_csp(self) -> Result<CspModel> {
        match self.model {
            ArchivedModel::Csp {
                channels,
                n_filters,
                filters,
                eigenvalues,
                weights,
                bias,
            } => {
                if weights.len() != n_filters || eigenvalues.len() != n_filters {
                    return Err(Error::Format("CSP archive has inconsistent lengths".into()));
                }
                Ok(CspModel {
                    filters: CspFilters {
                        filters: from_row_major(channels, n_filters, &filters)?,
                        eigenvalues,
                    },
                    lda: LinearDecisionFunction { weights, bias },
                })
            }
            ArchivedModel::Rgc { .. } => Err(Error::Format("archive holds an RGC model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgc_round_trip_is_exact() {
        let mean = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let svm = LinearDecisionFunction {
            weights: vec![0.1, -0.2, 1.0 / 3.0],
            bias: -0.7,
        };
        let model = RgcModel::from_parts(mean, svm, 1.0).unwrap();
        let json = ModelArchive::from(&model).to_json().unwrap();
        assert!(json.contains("\"kind\": \"rgc\""));
        let back = ModelArchive::from_json(&json).unwrap().into_rgc().unwrap();
        assert_eq!(back.reference_mean(), model.reference_mean());
        assert_eq!(back.svm, model.svm);
    }

    #[test]
    fn csp_round_trip_and_version_check() {
        let model = CspModel {
            filters: CspFilters {
                filters: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                eigenvalues: vec![0.9, 0.1],
            },
            lda: LinearDecisionFunction {
                weights: vec![1.0, -1.0],
                bias: 0.5,
            },
        };
        let archive = ModelArchive::from(&model);
        let json = archive.to_json().unwrap();
        assert_eq!(ModelArchive::from_json(&json).unwrap().into_csp().unwrap(), model);
        assert!(ModelArchive::from_json(&json).unwrap().into_rgc().is_err());
        let bumped = json.replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(ModelArchive::from_json(&bumped).is_err());
    }
}
