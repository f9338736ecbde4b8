//! Weighted least squares in basis space and prediction.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFile, FeatureBasis};
use crate::error::{domain_err, shape_err, Error, Result};
use crate::linalg::{self, SymMatrix, DEFAULT_EIG_TOL};
use crate::sampler::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Smallest eigenvalue of the unregularized weighted Gram `A'A`.
    pub gram_lambda_min: f64,
    /// `||A alpha - y_u||_2`
    pub residual_norm: f64,
}

/// Coefficients of a fitted function `f(x) = alpha' v(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub alpha: Array1<f64>,
    /// Id of the basis the coefficients refer to; `None` until bound.
    pub basis_id: Option<String>,
    pub ridge: f64,
    pub diagnostics: FitDiagnostics,
}

impl RegressionModel {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Attaches the basis whose evaluations the model was fitted on.
    pub fn bind(mut self, basis: &FeatureBasis) -> Result<Self> {
        if basis.dim() != self.dim() {
            return Err(shape_err(format!(
                "model has {} coefficients but the basis has dimension {}",
                self.dim(),
                basis.dim()
            )));
        }
        self.basis_id = Some(basis.id());
        Ok(self)
    }

    fn check_basis(&self, basis: &FeatureBasis) -> Result<()> {
        let found = basis.id();
        match &self.basis_id {
            Some(expected) if *expected == found && basis.dim() == self.dim() => Ok(()),
            Some(expected) => Err(Error::BasisMismatch {
                expected: expected.clone(),
                found,
            }),
            None => Err(Error::BasisMismatch {
                expected: "<unbound>".into(),
                found,
            }),
        }
    }

    /// `alpha' v(x)` for one raw feature vector.
    pub fn predict(&self, basis: &FeatureBasis, x: ArrayView1<f64>) -> Result<f64> {
        self.check_basis(basis)?;
        Ok(self.alpha.dot(&basis.eval(x)?))
    }

    /// Predictions for every row of `xs`.
    pub fn predict_rows(&self, basis: &FeatureBasis, xs: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_basis(basis)?;
        Ok(basis.eval_rows(xs)?.dot(&self.alpha))
    }

    /// Predictions from precomputed basis evaluations (`n x d`).
    pub fn predict_evaluations(&self, v: ArrayView2<f64>) -> Result<Array1<f64>> {
        if v.ncols() != self.dim() {
            return Err(shape_err(format!(
                "evaluations have {} columns, model has {} coefficients",
                v.ncols(),
                self.dim()
            )));
        }
        Ok(v.dot(&self.alpha))
    }

    pub fn to_file(&self, basis: Option<&FeatureBasis>) -> ModelFile {
        ModelFile {
            basis_id: self.basis_id.clone(),
            alpha: self.alpha.to_vec(),
            ridge: self.ridge,
            gram_lambda_min: self.diagnostics.gram_lambda_min,
            residual_norm: self.diagnostics.residual_norm,
            basis: basis.map(FeatureBasis::to_file),
            provenance: None,
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        if file.alpha.is_empty() || !file.alpha.iter().all(|a| a.is_finite()) {
            return Err(Error::Schema("model coefficients must be finite and non-empty".into()));
        }
        Ok(Self {
            alpha: Array1::from(file.alpha.clone()),
            basis_id: file.basis_id.clone(),
            ridge: file.ridge,
            diagnostics: FitDiagnostics {
                gram_lambda_min: file.gram_lambda_min,
                residual_norm: file.residual_norm,
            },
        })
    }
}

/// On-disk form of a model. The basis may be embedded so that the file is
/// self-contained for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub basis_id: Option<String>,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub ridge: f64,
    pub gram_lambda_min: f64,
    pub residual_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Minimizes `sum_i u_i (alpha' v_i - y_i)^2 + ridge ||alpha||^2` over the
/// rows `v_i` of `v`.
pub fn fit_weighted(v: ArrayView2<f64>, y: ArrayView1<f64>, u: ArrayView1<f64>, ridge: f64) -> Result<RegressionModel> {
    let (k, d) = v.dim();
    if k == 0 || d == 0 {
        return Err(shape_err(format!("design matrix is {k}x{d}")));
    }
    if y.len() != k || u.len() != k {
        return Err(shape_err(format!(
            "{k} rows, {} targets and {} weights",
            y.len(),
            u.len()
        )));
    }
    if !u.iter().all(|&w| w > 0.0 && w.is_finite()) {
        return Err(domain_err("weights must be positive and finite"));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(domain_err(format!("ridge must be non-negative, got {ridge}")));
    }
    if !v.iter().chain(y.iter()).all(|x| x.is_finite()) {
        return Err(Error::Numerical("non-finite design or target entries".into()));
    }

    let gram = SymMatrix::weighted_gram(v, u)?;
    let rhs = v.t().dot(&(&u * &y));
    let system = if ridge > 0.0 { gram.shifted(ridge) } else { gram.clone() };

    let rank_error = |detail: String| {
        Error::Rank(format!(
            "weighted Gram matrix is singular ({detail}); pass a positive ridge or select more points"
        ))
    };
    let mut alpha = match linalg::solve_psd(&system, rhs.view()) {
        Ok(a) => a,
        Err(Error::SingularMatrix { lambda_min, .. }) if ridge == 0.0 => {
            return Err(rank_error(format!("lambda_min = {lambda_min:e}")))
        }
        Err(Error::Numerical(msg)) if ridge == 0.0 => return Err(rank_error(msg)),
        Err(e) => return Err(e),
    };
    // One step of iterative refinement.
    let correction = linalg::solve_psd(&system, (&rhs - &system.mul_vec(alpha.view())?).view())?;
    alpha += &correction;

    let sqrt_u = u.mapv(f64::sqrt);
    let residual = (&v.dot(&alpha) - &y) * &sqrt_u;
    let gram_lambda_min = linalg::eig_extremes(&gram, DEFAULT_EIG_TOL)?.lambda_min;
    Ok(RegressionModel {
        alpha,
        basis_id: None,
        ridge,
        diagnostics: FitDiagnostics {
            gram_lambda_min,
            residual_norm: residual.dot(&residual).sqrt(),
        },
    })
}

/// Unweighted least squares over every row: `fit_weighted` with `u = 1/n`, no ridge.
pub fn fit_full(v: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<RegressionModel> {
    let n = v.nrows();
    if n == 0 {
        return Err(shape_err("design matrix has no rows"));
    }
    let u = Array1::from_elem(n, 1.0 / n as f64);
    fit_weighted(v, y, u.view(), 0.0)
}

/// Row probabilities `u_i / sum u` for a stochastic optimizer that should
/// minimize the weighted objective by sampling.
pub fn sgd_sampling_probabilities(u: ArrayView1<f64>) -> Result<Array1<f64>> {
    if u.is_empty() {
        return Err(domain_err("no weights given"));
    }
    if !u.iter().all(|&w| w > 0.0 && w.is_finite()) {
        return Err(domain_err("weights must be positive and finite"));
    }
    let total: f64 = u.sum();
    Ok(u.mapv(|w| w / total))
}
