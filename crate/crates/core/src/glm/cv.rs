//! Cross-validated choice of the lasso penalty.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lasso::{lambda_grid, lambda_max, logistic_lasso_path, LassoOptions};
use super::{sigmoid, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionRule {
    /// λ minimizing mean CV deviance.
    Min,
    /// Largest λ whose mean CV deviance is within one standard error of
    /// the minimum.
    OneSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub n_folds: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Explicit descending grid; overrides `n_lambda` / `lambda_min_ratio`.
    pub lambda_grid: Option<Vec<f64>>,
    pub rule: SelectionRule,
    pub lasso: LassoOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            n_folds: 10,
            n_lambda: 100,
            lambda_min_ratio: 0.01,
            lambda_grid: None,
            rule: SelectionRule::Min,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_deviance: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected design columns (0-based, intercept excluded), ascending.
    pub selected: Vec<usize>,
    pub lambda_chosen: f64,
    pub lambda_index: usize,
    pub cv_curve: Vec<CvPoint>,
}

/// Stratified fold labels: each class is shuffled and dealt round-robin,
/// the second class continuing where the first stopped.
pub fn fold_assignment<R: Rng + ?Sized>(response: &[f64], n_folds: usize, rng: &mut R) -> Vec<usize> {
    let mut folds = vec![0; response.len()];
    let mut next = 0;
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..response.len()).filter(|&i| response[i] == class).collect();
        idx.shuffle(rng);
        for i in idx {
            folds[i] = next % n_folds;
            next += 1;
        }
    }
    folds
}

fn single_class_fold(response: &[f64], folds: &[usize], n_folds: usize) -> Option<usize> {
    (0..n_folds).find(|&k| {
        let mut held = [0usize; 2];
        let mut kept = [0usize; 2];
        for (i, &f) in folds.iter().enumerate() {
            let c = response[i] as usize;
            if f == k {
                held[c] += 1;
            } else {
                kept[c] += 1;
            }
        }
        held.contains(&0) || kept.contains(&0)
    })
}

/// Mean binomial deviance, probabilities clamped to `[1e-5, 1 − 1e-5]`.
fn deviance(y: &[f64], eta: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    for (&yi, e) in y.iter().zip(eta) {
        let p = sigmoid(e).clamp(1e-5, 1.0 - 1e-5);
        total += -2.0 * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
    }
    total / y.len() as f64
}

/// K-fold cross-validated lasso; `selected` are the nonzero slopes of the
/// full-data fit at the chosen λ.
pub fn cv_select<R: Rng + ?Sized>(data: &Dataset, opts: &CvOptions, rng: &mut R) -> Result<SelectionResult> {
    let n = data.n();
    if opts.n_folds < 3 || opts.n_folds > n {
        return Err(Error::InvalidArgument(format!(
            "n_folds = {} must lie in [3, n = {n}]",
            opts.n_folds
        )));
    }
    let grid = match &opts.lambda_grid {
        Some(g) => g.clone(),
        None => lambda_grid(lambda_max(data, &opts.lasso), opts.n_lambda, opts.lambda_min_ratio),
    };

    let y = data.response();
    let mut folds = fold_assignment(y, opts.n_folds, rng);
    if single_class_fold(y, &folds, opts.n_folds).is_some() {
        folds = fold_assignment(y, opts.n_folds, rng);
        if let Some(fold) = single_class_fold(y, &folds, opts.n_folds) {
            return Err(Error::SingleClassFold { fold });
        }
    }

    let mut fold_dev = Vec::with_capacity(opts.n_folds);
    let mut fold_size = Vec::with_capacity(opts.n_folds);
    for k in 0..opts.n_folds {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == k).collect();
        let train_data = data.select_rows(&train)?;
        let test_data = data.select_rows(&test)?;
        let path = logistic_lasso_path(&train_data, &grid, &opts.lasso)?;
        let devs: Vec<f64> = path
            .fits
            .iter()
            .map(|fit| {
                deviance(
                    test_data.response(),
                    (0..test_data.n()).map(|i| fit.linear_predictor(&test_data, i)),
                )
            })
            .collect();
        fold_dev.push(devs);
        fold_size.push(test.len() as f64);
    }

    let total: f64 = fold_size.iter().sum();
    let cv_curve: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let mean = (0..opts.n_folds).map(|k| fold_size[k] * fold_dev[k][l]).sum::<f64>() / total;
            let var = (0..opts.n_folds)
                .map(|k| fold_size[k] * (fold_dev[k][l] - mean).powi(2))
                .sum::<f64>()
                / total;
            CvPoint {
                lambda,
                mean_deviance: mean,
                se: (var / (opts.n_folds as f64 - 1.0)).sqrt(),
            }
        })
        .collect();

    // Strict comparison keeps the earliest (largest) λ on ties.
    let best = (1..cv_curve.len()).fold(0, |b, l| {
        if cv_curve[l].mean_deviance < cv_curve[b].mean_deviance {
            l
        } else {
            b
        }
    });
    let chosen = match opts.rule {
        SelectionRule::Min => best,
        SelectionRule::OneSe => {
            let bound = cv_curve[best].mean_deviance + cv_curve[best].se;
            (0..=best).find(|&l| cv_curve[l].mean_deviance <= bound).unwrap_or(best)
        }
    };

    let full = logistic_lasso_path(data, &grid[..=chosen], &opts.lasso)?;
    let fit = full.fits.last().expect("nonempty path");
    Ok(SelectionResult {
        selected: fit.active(),
        lambda_chosen: grid[chosen],
        lambda_index: chosen,
        cv_curve,
    })
}
