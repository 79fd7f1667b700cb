//! Unpenalized logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{nll, sigmoid, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    /// Relative deviance change threshold.
    pub tol: f64,
    pub max_iter: usize,
    /// Threshold on the sup-norm of the score.
    pub score_tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            score_tol: 1e-8,
        }
    }
}

/// Coefficients are ordered intercept first, then design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coef: Vec<f64>,
    /// Inverse observed information `(XᵀWX)⁻¹`.
    pub cov_model: DMatrix<f64>,
    /// Heteroskedasticity-robust `B·M·B` with `M = Σ (yᵢ − pᵢ)² xᵢxᵢᵀ`.
    pub cov_sandwich: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub offset_used: bool,
    pub deviance: f64,
    pub score_norm: f64,
}

/// `bread · meat · bread`, symmetrized.
pub fn sandwich(bread_inv: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let s = bread_inv * meat * bread_inv;
    (&s + s.transpose()) * 0.5
}

fn with_intercept(data: &Dataset) -> DMatrix<f64> {
    let (n, p) = (data.n(), data.p());
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { data.design()[(i, j - 1)] })
}

struct State {
    prob: Vec<f64>,
    deviance: f64,
    score: DVector<f64>,
}

fn evaluate(x: &DMatrix<f64>, data: &Dataset, beta: &DVector<f64>) -> State {
    let eta = x * beta;
    let y = data.response();
    let mut deviance = 0.0;
    let mut prob = Vec::with_capacity(y.len());
    let mut resid = DVector::zeros(y.len());
    for i in 0..y.len() {
        let e = eta[i] + data.offset_at(i);
        deviance += 2.0 * nll(y[i], e);
        let p = sigmoid(e);
        resid[i] = y[i] - p;
        prob.push(p);
    }
    State {
        prob,
        deviance,
        score: x.tr_mul(&resid),
    }
}

fn information(x: &DMatrix<f64>, weights: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut xw = x.clone();
    for i in 0..x.nrows() {
        let w = weights(i);
        xw.row_mut(i).scale_mut(w);
    }
    x.tr_mul(&xw)
}

fn invert(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = info.clone().svd(false, false);
    let sv = &svd.singular_values;
    let max = sv.max();
    if !(max > 0.0) || sv.min() <= max * 1e-12 * info.nrows() as f64 {
        return Err(Error::RankDeficient);
    }
    info.clone().cholesky().map(|c| c.inverse()).ok_or(Error::RankDeficient)
}

/// Log-likelihood at `beta` (intercept first), offsets included.
pub fn log_likelihood(data: &Dataset, beta: &[f64]) -> Result<f64> {
    let x = with_intercept(data);
    check_len(&x, beta)?;
    Ok(-0.5 * evaluate(&x, data, &DVector::from_column_slice(beta)).deviance)
}

/// Analytic gradient of [`log_likelihood`].
pub fn log_likelihood_gradient(data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    let x = with_intercept(data);
    check_len(&x, beta)?;
    Ok(evaluate(&x, data, &DVector::from_column_slice(beta)).score.iter().copied().collect())
}

fn check_len(x: &DMatrix<f64>, beta: &[f64]) -> Result<()> {
    if beta.len() != x.ncols() {
        return Err(Error::InvalidArgument(format!(
            "coefficient vector has length {} but model has {}",
            beta.len(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Maximum-likelihood logistic fit with default options.
pub fn logistic_irls(data: &Dataset) -> Result<GlmFit> {
    logistic_irls_with(data, &IrlsOptions::default())
}

/// Maximum-likelihood logistic fit. Fails with [`Error::Separation`] when
/// the coefficients diverge and [`Error::RankDeficient`] for a singular
/// design.
pub fn logistic_irls_with(data: &Dataset, opts: &IrlsOptions) -> Result<GlmFit> {
    let x = with_intercept(data);
    let q = x.ncols();
    if x.nrows() < q {
        return Err(Error::RankDeficient);
    }
    invert(&x.tr_mul(&x))?;

    let mut beta = DVector::zeros(q);
    let mut state = evaluate(&x, data, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let info = information(&x, |i| state.prob[i] * (1.0 - state.prob[i]));
        let Some(chol) = info.cholesky() else {
            break;
        };
        let step = chol.solve(&state.score);
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut next_state = evaluate(&x, data, &next);
        while next_state.deviance > state.deviance * (1.0 + 1e-12) && t > 1e-8 {
            t *= 0.5;
            next = &beta + &step * t;
            next_state = evaluate(&x, data, &next);
        }
        let rel = (state.deviance - next_state.deviance).abs() / (next_state.deviance.abs() + 0.1);
        beta = next;
        state = next_state;
        // A perfect fit only arises from separated data, where the
        // likelihood has no maximizer however small the score gets.
        let perfect = state.prob.iter().zip(data.response()).all(|(p, y)| (y - p).abs() < 1e-6);
        if rel < opts.tol && state.score.amax() < opts.score_tol && !perfect {
            converged = true;
            break;
        }
        if beta.amax() > 30.0 && perfect {
            break;
        }
    }

    let max_abs_coef = beta.amax();
    if !converged && max_abs_coef > 30.0 {
        return Err(Error::Separation { max_abs_coef });
    }
    if !converged {
        return Err(Error::NotConverged { iterations });
    }

    let info = information(&x, |i| state.prob[i] * (1.0 - state.prob[i]));
    let cov_model = invert(&info)?;
    let y = data.response();
    let meat = information(&x, |i| (y[i] - state.prob[i]).powi(2));
    let cov_sandwich = sandwich(&cov_model, &meat);
    Ok(GlmFit {
        coef: beta.iter().copied().collect(),
        cov_model,
        cov_sandwich,
        converged,
        iterations,
        offset_used: data.offset().is_some(),
        deviance: state.deviance,
        score_norm: state.score.amax(),
    })
}
