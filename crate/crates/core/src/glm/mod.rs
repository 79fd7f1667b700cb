//! Logistic regression: lasso path with cross-validated selection,
//! IRLS with offsets, and Wald inference from model-based or sandwich
//! covariance.

mod cv;
mod irls;
mod lasso;
mod wald;

pub use cv::{cv_select, fold_assignment, CvOptions, CvPoint, SelectionResult, SelectionRule};
pub use irls::{log_likelihood, log_likelihood_gradient, logistic_irls, logistic_irls_with, sandwich, GlmFit, IrlsOptions};
pub use lasso::{lambda_grid, lambda_max, logistic_lasso_path, LassoFit, LassoOptions, LassoPath};
pub use wald::{wald_inference, CoefInference, CovKind};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Covariates, binary response and optional offset. An intercept is always
/// fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: Vec<f64>,
    offset: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(design: DMatrix<f64>, response: Vec<f64>, offset: Option<Vec<f64>>) -> Result<Self> {
        let n = design.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two observations".into()));
        }
        if response.len() != n {
            return Err(Error::InvalidArgument(format!(
                "response has length {} but design has {n} rows",
                response.len()
            )));
        }
        if response.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument("response must be binary 0/1".into()));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design has missing or non-finite values".into()));
        }
        if let Some(off) = &offset {
            if off.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "offset has length {} but design has {n} rows",
                    off.len()
                )));
            }
            if off.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("offset has non-finite values".into()));
            }
        }
        Ok(Self {
            design,
            response,
            offset,
        })
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    pub fn offset_at(&self, i: usize) -> f64 {
        self.offset.as_ref().map_or(0.0, |o| o[i])
    }

    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        Self::new(self.design.clone(), response, self.offset.clone())
    }

    pub fn with_offset(&self, offset: Option<Vec<f64>>) -> Result<Self> {
        Self::new(self.design.clone(), self.response.clone(), offset)
    }

    /// Dataset restricted to the given design columns.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.p()) {
            return Err(Error::InvalidArgument(format!("column {bad} out of range")));
        }
        let design = self.design.select_columns(columns);
        Self::new(design, self.response.clone(), self.offset.clone())
    }

    /// Rows with the given indices.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let design = self.design.select_rows(rows);
        let response = rows.iter().map(|&i| self.response[i]).collect();
        let offset = self.offset.as_ref().map(|o| rows.iter().map(|&i| o[i]).collect());
        Self::new(design, response, offset)
    }
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^η)` without overflow.
pub(crate) fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Negative log-likelihood of one Bernoulli observation at linear predictor η.
pub(crate) fn nll(y: f64, eta: f64) -> f64 {
    log1p_exp(eta) - y * eta
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Intercept-only maximum likelihood with offsets, by Newton's method.
pub(crate) fn null_intercept(y: &[f64], offset: Option<&[f64]>) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let Some(off) = offset else {
        return logit(ybar);
    };
    let mut b0 = logit(ybar) - off.iter().sum::<f64>() / n;
    for _ in 0..100 {
        let (mut g, mut h) = (0.0, 0.0);
        for (&yi, &oi) in y.iter().zip(off) {
            let p = sigmoid(oi + b0);
            g += yi - p;
            h += p * (1.0 - p);
        }
        let step = g / h;
        b0 += step;
        if step.abs() < 1e-14 * (1.0 + b0.abs()) {
            break;
        }
    }
    b0
}
