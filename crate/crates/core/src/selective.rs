//! Select-then-infer pipelines for logistic regression on Bernoulli folds.
//!
//! Both pipelines share the first two steps: every response is split with
//! the Bernoulli flip rule, and the lasso with cross-validation picks a
//! support `S` on the training fold. They differ only in the final fit of
//! the test fold (the original response) on `X_S`:
//!
//! - [`Method::FlawedMarginal`] fits without an offset and reports sandwich
//!   standard errors.
//! - [`Method::CorrectedOffset`] adds the per-observation offset of
//!   [`derive_offset`], so the fit is the conditional likelihood of the
//!   test fold given the training fold, and reports model-based standard
//!   errors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fission::fission_bernoulli_p2;
use crate::glm::{
    cv_select, logistic_irls, wald_inference, CoefInference, CovKind, CvOptions, Dataset, SelectionResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FlawedMarginal,
    CorrectedOffset,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::FlawedMarginal => "flawed",
            Self::CorrectedOffset => "corrected",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "flawed" => Some(Self::FlawedMarginal),
            "corrected" => Some(Self::CorrectedOffset),
            _ => None,
        }
    }

    fn covariance(self) -> CovKind {
        match self {
            Self::FlawedMarginal => CovKind::Sandwich,
            Self::CorrectedOffset => CovKind::Model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub cv: CvOptions,
    /// Confidence level of the Wald intervals.
    pub level: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            cv: CvOptions::default(),
            level: 0.95,
        }
    }
}

/// Output of the first two steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSelection {
    pub eps: f64,
    pub fold1: Vec<f64>,
    pub fold2: Vec<f64>,
    pub selected: SelectionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub selected: SelectionResult,
    /// Intercept first, then the columns of `selected.selected` in order.
    pub inference: Vec<CoefInference>,
    pub method: Method,
    pub eps: f64,
    pub fold1: Vec<f64>,
    pub fold2: Vec<f64>,
    /// `S` was empty and only the intercept was fitted.
    pub empty_selection: bool,
}

impl PipelineResult {
    /// Inference for design column `j`, if it was selected.
    pub fn slope(&self, j: usize) -> Option<&CoefInference> {
        self.selected
            .selected
            .iter()
            .position(|&c| c == j)
            .map(|k| &self.inference[k + 1])
    }

    pub fn intercept(&self) -> &CoefInference {
        &self.inference[0]
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("ε = {eps} must lie in (0, 1)")))
    }
}

/// `log(ε/(1−ε))` where the training bit is 0 and `log((1−ε)/ε)` where it
/// is 1.
pub fn derive_offset(fold1: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let base = (eps / (1.0 - eps)).ln();
    fold1
        .iter()
        .map(|&b| match b {
            0.0 => Ok(base),
            1.0 => Ok(-base),
            _ => Err(Error::InvalidArgument(format!("training fold value {b} is not binary"))),
        })
        .collect()
}

/// Steps 1 and 2: split every response, then select on the training fold.
/// All randomness of a pipeline run is consumed here.
pub fn split_and_select<R: Rng + ?Sized>(
    data: &Dataset,
    eps: f64,
    opts: &PipelineOptions,
    rng: &mut R,
) -> Result<SplitSelection> {
    check_eps(eps)?;
    let mut fold1 = Vec::with_capacity(data.n());
    let mut fold2 = Vec::with_capacity(data.n());
    for &y in data.response() {
        let pair = fission_bernoulli_p2(y as u8, eps, rng)?;
        fold1.push(pair.fold1);
        fold2.push(pair.fold2);
    }
    let train = Dataset::new(data.design().clone(), fold1.clone(), None)?;
    let selected = cv_select(&train, &opts.cv, rng)?;
    Ok(SplitSelection {
        eps,
        fold1,
        fold2,
        selected,
    })
}

/// Step 3 on given folds and support.
pub fn infer_on_support(
    data: &Dataset,
    fold1: &[f64],
    fold2: &[f64],
    support: &[usize],
    eps: f64,
    method: Method,
    level: f64,
) -> Result<Vec<CoefInference>> {
    if fold1.len() != data.n() || fold2.len() != data.n() {
        return Err(Error::InvalidArgument("fold lengths differ from the number of rows".into()));
    }
    let offset = match method {
        Method::FlawedMarginal => None,
        Method::CorrectedOffset => Some(derive_offset(fold1, eps)?),
    };
    let test = Dataset::new(data.design().select_columns(support), fold2.to_vec(), offset)?;
    let fit = logistic_irls(&test)?;
    wald_inference(&fit, level, method.covariance())
}

/// Step 3 for an already split and selected dataset.
pub fn finish_pipeline(data: &Dataset, split: &SplitSelection, method: Method, level: f64) -> Result<PipelineResult> {
    let inference = infer_on_support(
        data,
        &split.fold1,
        &split.fold2,
        &split.selected.selected,
        split.eps,
        method,
        level,
    )?;
    Ok(PipelineResult {
        empty_selection: split.selected.selected.is_empty(),
        selected: split.selected.clone(),
        inference,
        method,
        eps: split.eps,
        fold1: split.fold1.clone(),
        fold2: split.fold2.clone(),
    })
}

pub fn run_pipeline<R: Rng + ?Sized>(
    data: &Dataset,
    eps: f64,
    method: Method,
    opts: &PipelineOptions,
    rng: &mut R,
) -> Result<PipelineResult> {
    let split = split_and_select(data, eps, opts, rng)?;
    finish_pipeline(data, &split, method, opts.level)
}

/// No offset, sandwich covariance.
pub fn run_flawed_pipeline<R: Rng + ?Sized>(data: &Dataset, eps: f64, rng: &mut R) -> Result<PipelineResult> {
    run_pipeline(data, eps, Method::FlawedMarginal, &PipelineOptions::default(), rng)
}

/// Conditional-likelihood offset, model-based covariance.
pub fn run_corrected_pipeline<R: Rng + ?Sized>(data: &Dataset, eps: f64, rng: &mut R) -> Result<PipelineResult> {
    run_pipeline(data, eps, Method::CorrectedOffset, &PipelineOptions::default(), rng)
}
