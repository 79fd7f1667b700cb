//! Wald intervals and tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::irls::GlmFit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    Model,
    Sandwich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefInference {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Two-sided p-value for a zero coefficient.
    pub p_value: f64,
}

/// Per-coefficient inference at confidence `level`, intercept first.
pub fn wald_inference(fit: &GlmFit, level: f64, cov: CovKind) -> Result<Vec<CoefInference>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} not in (0, 1)")));
    }
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    let std = Normal::standard();
    let z = std.inverse_cdf(0.5 + level / 2.0);
    let matrix = match cov {
        CovKind::Model => &fit.cov_model,
        CovKind::Sandwich => &fit.cov_sandwich,
    };
    Ok(fit
        .coef
        .iter()
        .enumerate()
        .map(|(j, &estimate)| {
            let se = matrix[(j, j)].max(0.0).sqrt();
            CoefInference {
                estimate,
                se,
                ci_lower: estimate - z * se,
                ci_upper: estimate + z * se,
                p_value: 2.0 * std.cdf(-(estimate / se).abs()),
            }
        })
        .collect())
}
