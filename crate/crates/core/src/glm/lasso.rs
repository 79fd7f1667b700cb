//! L1-penalized logistic regression by coordinate descent.
//!
//! Minimizes `(1/n)·NLL(β₀, β) + λ‖β‖₁` (intercept unpenalized). Each outer
//! iteration forms the weighted least-squares approximation of the
//! log-likelihood at the current point and solves its lasso problem by
//! cyclic coordinate descent, alternating full sweeps with sweeps over the
//! active set. Outer steps that increase the objective are halved.

use serde::{Deserialize, Serialize};

use super::{nll, null_intercept, sigmoid, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Standardize columns (population standard deviation) before fitting.
    pub standardize: bool,
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
    /// Coordinate-descent sweep budget per λ.
    pub max_sweeps: usize,
    pub max_outer: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            tol: 1e-8,
            max_sweeps: 100_000,
            max_outer: 100,
        }
    }
}

/// Solution at one λ, on the original covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn active(&self) -> Vec<usize> {
        self.coef
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn linear_predictor(&self, data: &Dataset, i: usize) -> f64 {
        let row = data.design().row(i);
        data.offset_at(i) + self.intercept + row.iter().zip(&self.coef).map(|(x, b)| x * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub fits: Vec<LassoFit>,
    /// Column centres and scales used internally.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LassoPath {
    pub fn lambdas(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.lambda).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }

    /// Largest violation of the optimality conditions at fit `k`, in the
    /// coordinates the problem was solved in: for a zero slope
    /// `max(0, |g_j| − λ)`, for an active slope `|g_j − λ·sign(β_j)|`,
    /// and for the intercept `|g₀|`, where `g` is the gradient of the
    /// mean log-likelihood.
    pub fn kkt_violation(&self, data: &Dataset, k: usize) -> f64 {
        let fit = &self.fits[k];
        let n = data.n() as f64;
        let resid: Vec<f64> = (0..data.n())
            .map(|i| data.response()[i] - sigmoid(fit.linear_predictor(data, i)))
            .collect();
        let mut worst = (resid.iter().sum::<f64>() / n).abs();
        for j in 0..data.p() {
            if self.scale[j] == 0.0 {
                continue;
            }
            let col = data.design().column(j);
            let g = col
                .iter()
                .zip(&resid)
                .map(|(x, r)| (x - self.center[j]) * r)
                .sum::<f64>()
                / (n * self.scale[j]);
            let v = if fit.coef[j] == 0.0 {
                (g.abs() - fit.lambda).max(0.0)
            } else {
                (g - fit.lambda * fit.coef[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Column-major standardized design.
struct Standardized {
    z: Vec<f64>,
    n: usize,
    p: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardized {
    fn new(data: &Dataset, standardize: bool) -> Self {
        let (n, p) = (data.n(), data.p());
        let mut z = vec![0.0; n * p];
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 0..p {
            let col = data.design().column(j);
            let dst = &mut z[j * n..(j + 1) * n];
            if standardize {
                let m = col.iter().sum::<f64>() / n as f64;
                let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                center[j] = m;
                scale[j] = sd;
                if sd > 0.0 {
                    for (d, x) in dst.iter_mut().zip(col.iter()) {
                        *d = (x - m) / sd;
                    }
                }
            } else {
                dst.iter_mut().zip(col.iter()).for_each(|(d, &x)| *d = x);
                if col.iter().all(|&x| x == 0.0) {
                    scale[j] = 0.0;
                }
            }
        }
        Self { z, n, p, center, scale }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.z[j * self.n..(j + 1) * self.n]
    }

    fn usable(&self, j: usize) -> bool {
        self.scale[j] != 0.0
    }

    fn to_original(&self, b0: f64, b: &[f64]) -> (f64, Vec<f64>) {
        let mut intercept = b0;
        let coef: Vec<f64> = (0..self.p)
            .map(|j| {
                if b[j] == 0.0 || !self.usable(j) {
                    return 0.0;
                }
                let c = b[j] / self.scale[j];
                intercept -= c * self.center[j];
                c
            })
            .collect();
        (intercept, coef)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `max_j |⟨z_j, y − μ₀⟩| / n` over the internal columns, where `μ₀` is the
/// intercept-only fit (the sample mean without an offset).
pub fn lambda_max(data: &Dataset, opts: &LassoOptions) -> f64 {
    lambda_max_std(&Standardized::new(data, opts.standardize), data)
}

fn lambda_max_std(std: &Standardized, data: &Dataset) -> f64 {
    let y = data.response();
    let b0 = null_intercept(y, data.offset());
    let resid: Vec<f64> = (0..std.n).map(|i| y[i] - sigmoid(data.offset_at(i) + b0)).collect();
    (0..std.p)
        .filter(|&j| std.usable(j))
        .map(|j| std.col(j).iter().zip(&resid).map(|(z, r)| z * r).sum::<f64>().abs() / std.n as f64)
        .fold(0.0, f64::max)
}

/// `n_lambda` values log-spaced from `lmax` down to `ratio·lmax`.
pub fn lambda_grid(lmax: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lmax];
    }
    (0..n_lambda)
        .map(|k| lmax * ratio.powf(k as f64 / (n_lambda - 1) as f64))
        .collect()
}

struct Solver<'a> {
    std: &'a Standardized,
    y: &'a [f64],
    offset: Option<&'a [f64]>,
    opts: LassoOptions,
    // linear predictor without offset
    lin: Vec<f64>,
    weights: Vec<f64>,
    working: Vec<f64>,
    resid: Vec<f64>,
    xwx: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(std: &'a Standardized, data: &'a Dataset, opts: LassoOptions) -> Self {
        let n = std.n;
        Self {
            std,
            y: data.response(),
            offset: data.offset(),
            opts,
            lin: vec![0.0; n],
            weights: vec![0.0; n],
            working: vec![0.0; n],
            resid: vec![0.0; n],
            xwx: vec![0.0; std.p],
        }
    }

    fn off(&self, i: usize) -> f64 {
        self.offset.map_or(0.0, |o| o[i])
    }

    fn set_linear_predictor(&mut self, b0: f64, b: &[f64]) {
        self.lin.iter_mut().for_each(|v| *v = b0);
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                for (v, z) in self.lin.iter_mut().zip(self.std.col(j)) {
                    *v += z * bj;
                }
            }
        }
    }

    fn objective(&self, lambda: f64, b: &[f64]) -> f64 {
        let loss: f64 = (0..self.std.n).map(|i| nll(self.y[i], self.off(i) + self.lin[i])).sum();
        loss / self.std.n as f64 + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Returns (converged, sweeps used).
    fn solve(&mut self, lambda: f64, b0: &mut f64, b: &mut [f64]) -> (bool, usize) {
        let n = self.std.n;
        let nf = n as f64;
        let mut sweeps = 0;
        self.set_linear_predictor(*b0, b);
        for _outer in 0..self.opts.max_outer {
            let old_b0 = *b0;
            let old_b = b.to_vec();
            let old_obj = self.objective(lambda, b);
            for i in 0..n {
                let p = sigmoid(self.off(i) + self.lin[i]);
                let w = (p * (1.0 - p)).max(1e-5);
                self.weights[i] = w;
                self.resid[i] = (self.y[i] - p) / w;
                self.working[i] = self.lin[i] + self.resid[i];
            }
            let sum_w: f64 = self.weights.iter().sum();
            for j in 0..self.std.p {
                self.xwx[j] = if self.std.usable(j) {
                    self.std
                        .col(j)
                        .iter()
                        .zip(&self.weights)
                        .map(|(z, w)| w * z * z)
                        .sum::<f64>()
                        / nf
                } else {
                    0.0
                };
            }

            // Inner coordinate descent on the quadratic approximation.
            let mut inner_ok = false;
            'inner: while sweeps < self.opts.max_sweeps {
                let delta = self.sweep(lambda, b0, b, sum_w, None);
                sweeps += 1;
                if delta < self.opts.tol {
                    inner_ok = true;
                    break;
                }
                let active: Vec<usize> = (0..self.std.p).filter(|&j| b[j] != 0.0).collect();
                while sweeps < self.opts.max_sweeps {
                    let delta = self.sweep(lambda, b0, b, sum_w, Some(&active));
                    sweeps += 1;
                    if delta < self.opts.tol {
                        continue 'inner;
                    }
                }
            }

            // New linear predictor: working response minus working residual.
            for i in 0..n {
                self.lin[i] = self.working[i] - self.resid[i];
            }
            let mut new_obj = self.objective(lambda, b);
            let mut t = 1.0;
            let new_b0 = *b0;
            let new_b = b.to_vec();
            while new_obj > old_obj + 1e-13 * old_obj.abs() && t > 1e-6 {
                t *= 0.5;
                *b0 = old_b0 + t * (new_b0 - old_b0);
                for j in 0..b.len() {
                    b[j] = old_b[j] + t * (new_b[j] - old_b[j]);
                }
                self.set_linear_predictor(*b0, b);
                new_obj = self.objective(lambda, b);
            }
            let change = b
                .iter()
                .zip(&old_b)
                .map(|(a, c)| (a - c).abs())
                .fold((*b0 - old_b0).abs(), f64::max);
            if inner_ok && change < self.opts.tol {
                return (true, sweeps);
            }
            if sweeps >= self.opts.max_sweeps {
                break;
            }
        }
        (false, sweeps)
    }

    /// One coordinate sweep (intercept first). Returns the largest change.
    fn sweep(&mut self, lambda: f64, b0: &mut f64, b: &mut [f64], sum_w: f64, only: Option<&[usize]>) -> f64 {
        let nf = self.std.n as f64;
        let shift = self.resid.iter().zip(&self.weights).map(|(r, w)| r * w).sum::<f64>() / sum_w;
        *b0 += shift;
        self.resid.iter_mut().for_each(|r| *r -= shift);
        let mut max_delta = shift.abs();
        let mut update = |j: usize, b: &mut [f64], resid: &mut [f64]| {
            if !self.std.usable(j) {
                return;
            }
            let z = self.std.col(j);
            let xwx = self.xwx[j];
            let grad = z
                .iter()
                .zip(resid.iter())
                .zip(&self.weights)
                .map(|((z, r), w)| w * z * r)
                .sum::<f64>()
                / nf
                + xwx * b[j];
            let new = soft_threshold(grad, lambda) / xwx;
            let delta = new - b[j];
            if delta != 0.0 {
                for (r, zi) in resid.iter_mut().zip(z) {
                    *r -= zi * delta;
                }
                b[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        };
        match only {
            Some(set) => set.iter().for_each(|&j| update(j, b, &mut self.resid)),
            None => (0..self.std.p).for_each(|j| update(j, b, &mut self.resid)),
        }
        max_delta
    }
}

/// Solutions along a descending λ grid with warm starts. λ values at or
/// above [`lambda_max`] return the intercept-only fit.
pub fn logistic_lasso_path(data: &Dataset, lambda_grid: &[f64], opts: &LassoOptions) -> Result<LassoPath> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty λ grid".into()));
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument("λ values must be positive".into()));
    }
    if lambda_grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument("λ grid must be descending".into()));
    }
    let std = Standardized::new(data, opts.standardize);
    let lmax = lambda_max_std(&std, data);
    let null_b0 = null_intercept(data.response(), data.offset());
    let mut solver = Solver::new(&std, data, *opts);
    let mut b0 = null_b0;
    let mut b = vec![0.0; std.p];
    let mut fits = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let (converged, sweeps) = if lambda >= lmax {
            b0 = null_b0;
            b.iter_mut().for_each(|v| *v = 0.0);
            (true, 0)
        } else {
            solver.solve(lambda, &mut b0, &mut b)
        };
        let (intercept, coef) = std.to_original(b0, &b);
        fits.push(LassoFit {
            lambda,
            intercept,
            coef,
            converged,
            sweeps,
        });
    }
    Ok(LassoPath {
        fits,
        center: std.center,
        scale: std.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{logistic_irls, logit};
    use crate::rng;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_data(seed: u64, n: usize, p: usize, beta: &[f64]) -> Dataset {
        let mut r = rng::master(seed);
        let x = DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| {
                let eta: f64 = 0.3 + (0..p).map(|j| x[(i, j)] * beta.get(j).copied().unwrap_or(0.0)).sum::<f64>();
                f64::from(u8::from(r.random::<f64>() < sigmoid(eta)))
            })
            .collect();
        Dataset::new(x, y, None).unwrap()
    }

    fn objective(data: &Dataset, lambda: f64, scale: &[f64], b0: f64, b: &[f64]) -> f64 {
        let n = data.n();
        let loss: f64 = (0..n)
            .map(|i| {
                let eta = b0 + (0..data.p()).map(|j| data.design()[(i, j)] * b[j]).sum::<f64>();
                nll(data.response()[i], eta)
            })
            .sum();
        loss / n as f64 + lambda * b.iter().zip(scale).map(|(v, s)| v.abs() * s).sum::<f64>()
    }

    /// Independent oracle: proximal gradient (ISTA) on the original-scale
    /// objective with column-weighted penalty, run to high precision.
    fn prox_gradient_oracle(data: &Dataset, lambda: f64, scale: &[f64]) -> (f64, Vec<f64>) {
        let (n, p) = (data.n(), data.p());
        let x = data.design();
        let lipschitz = {
            let xtx = x.transpose() * x;
            let mut max_row = 0.0f64;
            for i in 0..p {
                max_row = max_row.max(xtx.row(i).iter().map(|v| v.abs()).sum::<f64>());
            }
            0.25 * (max_row + n as f64 + 2.0 * x.iter().map(|v| v.abs()).sum::<f64>()) / n as f64
        };
        let step = 1.0 / lipschitz;
        let mut b0 = 0.0;
        let mut b = vec![0.0; p];
        for _ in 0..400_000 {
            let mut g0 = 0.0;
            let mut g = vec![0.0; p];
            for i in 0..n {
                let eta = b0 + (0..p).map(|j| x[(i, j)] * b[j]).sum::<f64>();
                let r = sigmoid(eta) - data.response()[i];
                g0 += r;
                for j in 0..p {
                    g[j] += r * x[(i, j)];
                }
            }
            b0 -= step * g0 / n as f64;
            for j in 0..p {
                b[j] = soft_threshold(b[j] - step * g[j] / n as f64, step * lambda * scale[j]);
            }
        }
        (b0, b)
    }

    #[test]
    fn lambda_max_zeroes_every_slope() {
        let data = random_data(1, 60, 4, &[1.0, -0.5]);
        let opts = LassoOptions::default();
        let lmax = lambda_max(&data, &opts);
        let path = logistic_lasso_path(&data, &[lmax * 1.5, lmax], &opts).unwrap();
        for fit in &path.fits {
            assert!(fit.coef.iter().all(|&c| c == 0.0));
            let ybar = data.response().iter().sum::<f64>() / 60.0;
            assert!((fit.intercept - logit(ybar)).abs() < 1e-12);
        }
        let below = logistic_lasso_path(&data, &[lmax * 0.95], &opts).unwrap();
        assert!(below.fits[0].coef.iter().any(|&c| c != 0.0));
    }

    #[test]
    fn tiny_penalty_matches_unpenalized_fit() {
        let data = random_data(2, 200, 1, &[1.8]);
        let opts = LassoOptions::default();
        let path = logistic_lasso_path(&data, &[1e-12], &opts).unwrap();
        let mle = logistic_irls(&data).unwrap();
        assert!((path.fits[0].intercept - mle.coef[0]).abs() < 1e-6);
        assert!((path.fits[0].coef[0] - mle.coef[1]).abs() < 1e-6);
    }

    #[test]
    fn objective_matches_proximal_gradient_oracle() {
        let data = random_data(3, 20, 3, &[1.2, 0.0, -0.8]);
        let opts = LassoOptions::default();
        let lmax = lambda_max(&data, &opts);
        let grid = [0.6 * lmax, 0.25 * lmax, 0.05 * lmax];
        let path = logistic_lasso_path(&data, &grid, &opts).unwrap();
        for (k, &lambda) in grid.iter().enumerate() {
            let fit = &path.fits[k];
            let ours = objective(&data, lambda, &path.scale, fit.intercept, &fit.coef);
            let (ob0, ob) = prox_gradient_oracle(&data, lambda, &path.scale);
            let oracle = objective(&data, lambda, &path.scale, ob0, &ob);
            assert!((ours - oracle).abs() < 1e-6, "λ={lambda}: {ours} vs {oracle}");
            assert!(ours <= oracle + 1e-9);
        }
    }

    #[test]
    fn kkt_conditions_hold_along_path() {
        for (seed, standardize) in [(4, true), (5, false)] {
            let data = random_data(seed, 150, 8, &[1.0, -1.5, 0.0, 0.5]);
            let opts = LassoOptions {
                standardize,
                ..LassoOptions::default()
            };
            let grid = lambda_grid(lambda_max(&data, &opts), 30, 0.01);
            let path = logistic_lasso_path(&data, &grid, &opts).unwrap();
            assert!(path.all_converged());
            for k in 0..grid.len() {
                let v = path.kkt_violation(&data, k);
                assert!(v <= 1e-6, "λ index {k}: {v}");
            }
        }
    }

    #[test]
    fn invalid_grids_rejected() {
        let data = random_data(6, 30, 2, &[]);
        let opts = LassoOptions::default();
        assert!(logistic_lasso_path(&data, &[0.1, 0.2], &opts).is_err());
        assert!(logistic_lasso_path(&data, &[0.1, -0.2], &opts).is_err());
        assert!(logistic_lasso_path(&data, &[], &opts).is_err());
    }

    #[test]
    fn sweep_budget_exhaustion_is_flagged() {
        let data = random_data(7, 100, 5, &[2.0, -2.0, 1.0]);
        let opts = LassoOptions {
            max_sweeps: 2,
            ..LassoOptions::default()
        };
        let lmax = lambda_max(&data, &opts);
        let path = logistic_lasso_path(&data, &[0.01 * lmax], &opts).unwrap();
        assert!(!path.fits[0].converged);
    }
}
