//! Model specification as loaded from TOML or JSON.
//!
//! ```toml
//! family = "mean_field_cosine"   # isotropic_gaussian | quadratic | free_flight | double_well | mean_field_cosine
//! d0 = 8
//! q = 1
//! epsilon = 0.1
//! cos_amplitude = 1.0
//! interaction_cos_amplitude = 0.5
//! rescale = false                # rescale to unit Lipschitz constant
//! # third_bound = 1.0            # optional overrides of the declared |D3 U_q|, |D4 U_q|
//! # fourth_bound = 1.0
//! ```

use serde::{Deserialize, Serialize};

use super::{rescale_to_unit_lipschitz, PotentialError, PotentialModel, Result};
use crate::linalg::Matrix;

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    IsotropicGaussian {
        dim: usize,
        #[serde(default = "one")]
        omega2: f64,
    },
    /// `U(x) = x^T Q x / 2`; give either the diagonal or the full matrix (rows).
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hessian_diag: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hessian: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    FreeFlight {
        dim: usize,
    },
    DoubleWell {
        dim: usize,
        #[serde(default = "two")]
        cap: f64,
    },
    MeanFieldCosine {
        d0: usize,
        #[serde(default = "one_usize")]
        q: usize,
        epsilon: f64,
        #[serde(default = "one")]
        cos_amplitude: f64,
        #[serde(default)]
        interaction_cos_amplitude: f64,
    },
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub spec: ModelSpec,
    #[serde(default)]
    pub rescale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub third_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourth_bound: Option<f64>,
}

impl ModelConfig {
    pub fn new(spec: ModelSpec) -> Self {
        ModelConfig {
            spec,
            rescale: false,
            third_bound: None,
            fourth_bound: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| PotentialError::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<PotentialModel> {
        let mut model = match &self.spec {
            ModelSpec::IsotropicGaussian { dim, omega2 } => {
                PotentialModel::isotropic_gaussian(*dim, *omega2)?
            }
            ModelSpec::Quadratic {
                hessian_diag,
                hessian,
                lipschitz,
            } => {
                let q = match (hessian_diag, hessian) {
                    (Some(diag), None) => {
                        Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag))
                    }
                    (None, Some(rows)) => {
                        let n = rows.len();
                        if rows.iter().any(|r| r.len() != n) {
                            return Err(PotentialError::Config(
                                "hessian must be a square list of rows".into(),
                            ));
                        }
                        Matrix::from_fn(n, n, |i, j| rows[i][j])
                    }
                    _ => {
                        return Err(PotentialError::Config(
                            "quadratic model needs exactly one of hessian_diag, hessian".into(),
                        ))
                    }
                };
                match lipschitz {
                    Some(l) => PotentialModel::quadratic_with_lipschitz(q, *l)?,
                    None => PotentialModel::quadratic(q)?,
                }
            }
            ModelSpec::FreeFlight { dim } => PotentialModel::free_flight(*dim)?,
            ModelSpec::DoubleWell { dim, cap } => PotentialModel::double_well(*dim, *cap)?,
            ModelSpec::MeanFieldCosine {
                d0,
                q,
                epsilon,
                cos_amplitude,
                interaction_cos_amplitude,
            } => PotentialModel::mean_field_cosine(
                *d0,
                *q,
                *epsilon,
                *cos_amplitude,
                *interaction_cos_amplitude,
            )?,
        };
        if self.third_bound.is_some() || self.fourth_bound.is_some() {
            let mut b = model
                .derivative_bounds()
                .unwrap_or_else(super::DerivativeBounds::zero);
            if let Some(t) = self.third_bound {
                b.third_u = t;
            }
            if let Some(f) = self.fourth_bound {
                b.fourth_u = f;
            }
            model = model.with_bounds(b);
        }
        if self.rescale {
            model = rescale_to_unit_lipschitz(&model)?.0;
        }
        Ok(model)
    }
}
