//! Distribution primitives.
//!
//! Parameterizations:
//!
//! | family                 | params                     |
//! |------------------------|----------------------------|
//! | `Bernoulli`            | `[θ]`                      |
//! | `Binomial`             | `[n, p]`                   |
//! | `Poisson`              | `[θ]` (mean)               |
//! | `NegBin`               | `[r, θ]`, mean `r(1−θ)/θ`  |
//! | `Gaussian`             | `[μ, σ²]` (variance)       |
//! | `Multinomial`          | `[n, p₁, …, p_K]`          |
//! | `DirichletMultinomial` | `[n, α₁, …, α_K]`          |
//!
//! Probability parameters live in the open interval `(0, 1)`; degenerate
//! members of a family are rejected at construction.

use std::fmt;

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Cumulative mass at which discrete expectations are truncated.
pub const TRUNCATION_MASS: f64 = 1.0 - 1e-12;
const MAX_SUPPORT_TERMS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Bernoulli,
    Binomial,
    Poisson,
    NegBin,
    Gaussian,
    Multinomial,
    DirichletMultinomial,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bernoulli => "Bernoulli",
            Family::Binomial => "Binomial",
            Family::Poisson => "Poisson",
            Family::NegBin => "NegBin",
            Family::Gaussian => "Gaussian",
            Family::Multinomial => "Multinomial",
            Family::DirichletMultinomial => "DirichletMultinomial",
        }
    }

    pub fn is_scalar(self) -> bool {
        !matches!(self, Family::Multinomial | Family::DirichletMultinomial)
    }

    pub fn is_discrete(self) -> bool {
        self != Family::Gaussian
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated member of one of the supported families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    family: Family,
    params: Vec<f64>,
}

fn invalid(family: Family, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        family: family.name(),
        reason: reason.into(),
    }
}

fn check_open_unit(family: Family, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(family, format!("{name} = {v} must lie in (0, 1)")))
    }
}

fn check_positive(family: Family, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(family, format!("{name} = {v} must be positive")))
    }
}

fn check_count(family: Family, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(())
    } else {
        Err(invalid(family, format!("{name} = {v} must be a nonnegative integer")))
    }
}

impl DistributionSpec {
    pub fn new(family: Family, params: Vec<f64>) -> Result<Self> {
        let arity_err = |want: &str| invalid(family, format!("expected {want} parameters, got {}", params.len()));
        match family {
            Family::Bernoulli | Family::Poisson => {
                if params.len() != 1 {
                    return Err(arity_err("1"));
                }
                if family == Family::Bernoulli {
                    check_open_unit(family, "θ", params[0])?;
                } else {
                    check_positive(family, "θ", params[0])?;
                }
            }
            Family::Binomial => {
                if params.len() != 2 {
                    return Err(arity_err("2"));
                }
                check_count(family, "n", params[0])?;
                check_open_unit(family, "p", params[1])?;
            }
            Family::NegBin => {
                if params.len() != 2 {
                    return Err(arity_err("2"));
                }
                check_positive(family, "r", params[0])?;
                check_open_unit(family, "θ", params[1])?;
            }
            Family::Gaussian => {
                if params.len() != 2 {
                    return Err(arity_err("2"));
                }
                if !params[0].is_finite() {
                    return Err(invalid(family, "μ must be finite"));
                }
                check_positive(family, "σ²", params[1])?;
            }
            Family::Multinomial => {
                if params.len() < 3 {
                    return Err(arity_err("at least 3"));
                }
                check_count(family, "n", params[0])?;
                for &p in &params[1..] {
                    check_open_unit(family, "p_k", p)?;
                }
                let total: f64 = params[1..].iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(family, format!("probabilities sum to {total}, not 1")));
                }
            }
            Family::DirichletMultinomial => {
                if params.len() < 3 {
                    return Err(arity_err("at least 3"));
                }
                check_count(family, "n", params[0])?;
                for &a in &params[1..] {
                    check_positive(family, "α_k", a)?;
                }
            }
        }
        Ok(Self { family, params })
    }

    pub fn bernoulli(theta: f64) -> Result<Self> {
        Self::new(Family::Bernoulli, vec![theta])
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        Self::new(Family::Binomial, vec![n as f64, p])
    }

    pub fn poisson(theta: f64) -> Result<Self> {
        Self::new(Family::Poisson, vec![theta])
    }

    pub fn negbin(r: f64, theta: f64) -> Result<Self> {
        Self::new(Family::NegBin, vec![r, theta])
    }

    pub fn gaussian(mu: f64, sigma_sq: f64) -> Result<Self> {
        Self::new(Family::Gaussian, vec![mu, sigma_sq])
    }

    pub fn multinomial(n: u64, probs: &[f64]) -> Result<Self> {
        let mut params = vec![n as f64];
        params.extend_from_slice(probs);
        Self::new(Family::Multinomial, params)
    }

    pub fn dirichlet_multinomial(n: u64, alpha: &[f64]) -> Result<Self> {
        let mut params = vec![n as f64];
        params.extend_from_slice(alpha);
        Self::new(Family::DirichletMultinomial, params)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param(&self, index: usize) -> f64 {
        self.params[index]
    }

    /// Index of the parameter the fission rules treat as the unknown θ:
    /// the mean for Gaussian, the success probability for NegBin and
    /// Binomial, the sole parameter otherwise.
    pub fn primary_index(&self) -> usize {
        match self.family {
            Family::NegBin | Family::Binomial => 1,
            _ => 0,
        }
    }

    pub fn primary(&self) -> f64 {
        self.params[self.primary_index()]
    }

    /// Copy with parameter `index` replaced, re-validated.
    pub fn with_param(&self, index: usize, value: f64) -> Result<Self> {
        if index >= self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} has no parameter index {index}",
                self.family
            )));
        }
        let mut params = self.params.clone();
        params[index] = value;
        Self::new(self.family, params)
    }

    pub fn mean(&self) -> Result<f64> {
        let p = &self.params;
        Ok(match self.family {
            Family::Bernoulli | Family::Poisson => p[0],
            Family::Binomial => p[0] * p[1],
            Family::NegBin => p[0] * (1.0 - p[1]) / p[1],
            Family::Gaussian => p[0],
            _ => return Err(self.not_scalar()),
        })
    }

    pub fn variance(&self) -> Result<f64> {
        let p = &self.params;
        Ok(match self.family {
            Family::Bernoulli => p[0] * (1.0 - p[0]),
            Family::Binomial => p[0] * p[1] * (1.0 - p[1]),
            Family::Poisson => p[0],
            Family::NegBin => p[0] * (1.0 - p[1]) / (p[1] * p[1]),
            Family::Gaussian => p[1],
            _ => return Err(self.not_scalar()),
        })
    }

    fn not_scalar(&self) -> Error {
        Error::InvalidArgument(format!("{} is vector-valued", self.family))
    }

    /// `n` i.i.d. draws from a scalar family.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        if !self.family.is_scalar() {
            return Err(self.not_scalar());
        }
        Ok((0..n).map(|_| self.draw_scalar(rng)).collect())
    }

    /// `n` i.i.d. count vectors from Multinomial or DirichletMultinomial.
    pub fn sample_counts<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<Vec<u64>>> {
        let trials = self.params[0] as u64;
        match self.family {
            Family::Multinomial => Ok((0..n).map(|_| multinomial(rng, trials, &self.params[1..])).collect()),
            Family::DirichletMultinomial => Ok((0..n)
                .map(|_| {
                    let weights = dirichlet(rng, &self.params[1..]);
                    multinomial(rng, trials, &weights)
                })
                .collect()),
            _ => Err(Error::InvalidArgument(format!("{} is scalar-valued", self.family))),
        }
    }

    pub(crate) fn draw_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Bernoulli => f64::from(u8::from(rng.random::<f64>() < p[0])),
            Family::Binomial => binomial(rng, p[0] as u64, p[1]) as f64,
            Family::Poisson => poisson(rng, p[0]) as f64,
            Family::NegBin => {
                // Gamma–Poisson mixture.
                let rate = Gamma::new(p[0], (1.0 - p[1]) / p[1])
                    .expect("validated NegBin parameters")
                    .sample(rng);
                poisson(rng, rate) as f64
            }
            Family::Gaussian => Normal::new(p[0], p[1].sqrt())
                .expect("validated Gaussian parameters")
                .sample(rng),
            Family::Multinomial | Family::DirichletMultinomial => unreachable!("vector family"),
        }
    }

    /// Log pmf (discrete) or log pdf (Gaussian) at a scalar point.
    pub fn log_mass(&self, x: f64) -> Result<f64> {
        if !self.family.is_scalar() {
            return Err(self.not_scalar());
        }
        let p = &self.params;
        if self.family.is_discrete() && !(x.is_finite() && x >= 0.0 && x.fract() == 0.0) {
            return Err(self.out_of_support(x));
        }
        Ok(match self.family {
            Family::Bernoulli => match x as u64 {
                0 => (1.0 - p[0]).ln(),
                1 => p[0].ln(),
                _ => return Err(self.out_of_support(x)),
            },
            Family::Binomial => {
                let n = p[0];
                if x > n {
                    return Err(self.out_of_support(x));
                }
                ln_choose(n, x) + x * p[1].ln() + (n - x) * (-p[1]).ln_1p()
            }
            Family::Poisson => x * p[0].ln() - p[0] - ln_gamma(x + 1.0),
            Family::NegBin => {
                let (r, theta) = (p[0], p[1]);
                ln_gamma(x + r) - ln_gamma(r) - ln_gamma(x + 1.0) + r * theta.ln() + x * (-theta).ln_1p()
            }
            Family::Gaussian => {
                if !x.is_finite() {
                    return Err(self.out_of_support(x));
                }
                let (mu, var) = (p[0], p[1]);
                -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mu).powi(2) / var)
            }
            Family::Multinomial | Family::DirichletMultinomial => unreachable!(),
        })
    }

    /// Log pmf of a count vector for Multinomial / DirichletMultinomial.
    pub fn log_mass_counts(&self, x: &[u64]) -> Result<f64> {
        let k = self.params.len() - 1;
        let n = self.params[0];
        if self.family.is_scalar() {
            return Err(Error::InvalidArgument(format!("{} is scalar-valued", self.family)));
        }
        let total: u64 = x.iter().sum();
        if x.len() != k || total as f64 != n {
            return Err(self.out_of_support_counts(x));
        }
        let weights = &self.params[1..];
        let log_coef = ln_gamma(n + 1.0) - x.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>();
        Ok(match self.family {
            Family::Multinomial => {
                log_coef + x.iter().zip(weights).map(|(&c, &p)| c as f64 * p.ln()).sum::<f64>()
            }
            _ => {
                let a0: f64 = weights.iter().sum();
                log_coef + ln_gamma(a0) - ln_gamma(n + a0)
                    + x.iter()
                        .zip(weights)
                        .map(|(&c, &a)| ln_gamma(c as f64 + a) - ln_gamma(a))
                        .sum::<f64>()
            }
        })
    }

    fn out_of_support(&self, x: f64) -> Error {
        Error::OutOfSupport {
            family: self.family.name(),
            value: x.to_string(),
        }
    }

    fn out_of_support_counts(&self, x: &[u64]) -> Error {
        Error::OutOfSupport {
            family: self.family.name(),
            value: format!("{x:?}"),
        }
    }

    /// Closed-form Fisher information for the parameter at `wrt`.
    pub fn fisher_info(&self, wrt: usize) -> Result<f64> {
        let p = &self.params;
        let unsupported = || {
            Error::NotImplemented(format!(
                "closed-form Fisher information of {} w.r.t. parameter {wrt}",
                self.family
            ))
        };
        match (self.family, wrt) {
            (Family::Bernoulli, 0) => Ok(1.0 / (p[0] * (1.0 - p[0]))),
            (Family::Binomial, 1) => Ok(p[0] / (p[1] * (1.0 - p[1]))),
            (Family::Poisson, 0) => Ok(1.0 / p[0]),
            (Family::NegBin, 1) => Ok(p[0] / (p[1] * p[1] * (1.0 - p[1]))),
            (Family::Gaussian, 0) => Ok(1.0 / p[1]),
            (Family::Gaussian, 1) => Ok(0.5 / (p[1] * p[1])),
            _ => Err(unsupported()),
        }
    }

    /// Central-difference estimate of `E[(∂ log p)²]` taken exactly over the
    /// (truncated) support, or by quadrature for the Gaussian.
    pub fn fisher_info_numeric(&self, wrt: usize, h: f64) -> Result<f64> {
        if !self.family.is_scalar() || (self.family == Family::Binomial && wrt == 0) {
            return Err(Error::NotImplemented(format!(
                "numeric Fisher information of {} w.r.t. parameter {wrt}",
                self.family
            )));
        }
        if wrt >= self.params.len() {
            return Err(Error::InvalidArgument(format!("no parameter index {wrt}")));
        }
        let base = self.params[wrt];
        fisher_info_numeric_along(|v| self.with_param(wrt, v), base, h)
    }

    /// Visit every support point of a discrete scalar law with its mass,
    /// stopping once the cumulative mass reaches [`TRUNCATION_MASS`].
    pub fn for_each_support_point(&self, mut visit: impl FnMut(f64, f64)) -> Result<()> {
        if !(self.family.is_scalar() && self.family.is_discrete()) {
            return Err(Error::InvalidArgument(format!(
                "{} has no enumerable scalar support",
                self.family
            )));
        }
        let upper = match self.family {
            Family::Bernoulli => Some(1.0),
            Family::Binomial => Some(self.params[0]),
            _ => None,
        };
        let mut cum = 0.0;
        let mut x = 0.0;
        for terms in 0..MAX_SUPPORT_TERMS {
            if upper.is_some_and(|u| x > u) {
                return Ok(());
            }
            let mass = self.log_mass(x)?.exp();
            visit(x, mass);
            cum += mass;
            if upper.is_none() && cum >= TRUNCATION_MASS && x > self.mean()? {
                return Ok(());
            }
            x += 1.0;
            if terms + 1 == MAX_SUPPORT_TERMS {
                break;
            }
        }
        Err(Error::TruncationFailed {
            target: TRUNCATION_MASS,
            terms: MAX_SUPPORT_TERMS,
        })
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.params.iter().map(|v| format!("{v}")).collect();
        write!(f, "{}({})", self.family, body.join(", "))
    }
}

/// Numerical Fisher information of a one-parameter curve of laws
/// `value ↦ law(value)` at `at`, from central differences of the log-mass.
///
/// Expectation is exact over the truncated support for discrete laws and
/// by composite Simpson quadrature over ±14 standard deviations for the
/// Gaussian.
pub fn fisher_info_numeric_along<F>(law: F, at: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<DistributionSpec>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidArgument(format!("step h = {h} outside [1e-6, 1e-3]")));
    }
    let centre = law(at)?;
    let plus = law(at + h)?;
    let minus = law(at - h)?;
    if centre.family.is_discrete() {
        let mut acc = 0.0;
        let mut failure = None;
        centre.for_each_support_point(|x, mass| {
            if failure.is_some() || mass == 0.0 {
                return;
            }
            match (plus.log_mass(x), minus.log_mass(x)) {
                (Ok(lp), Ok(lm)) => {
                    let score = (lp - lm) / (2.0 * h);
                    acc += mass * score * score;
                }
                (Err(e), _) | (_, Err(e)) => failure = Some(e),
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    } else {
        let (mu, var) = (centre.params[0], centre.params[1]);
        let sd = var.sqrt();
        let intervals = 8000;
        let lo = mu - 14.0 * sd;
        let step = 28.0 * sd / intervals as f64;
        let mut acc = 0.0;
        for i in 0..=intervals {
            let x = lo + step * i as f64;
            let density = centre.log_mass(x)?.exp();
            let score = (plus.log_mass(x)? - minus.log_mass(x)?) / (2.0 * h);
            let weight = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += weight * density * score * score;
        }
        Ok(acc * step / 3.0)
    }
}

fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

pub(crate) fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(rate).expect("valid Poisson rate").sample(rng);
    draw as u64
}

pub(crate) fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("valid beta parameters").sample(rng)
}

/// Multinomial draw by sequential conditional binomials.
pub(crate) fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(probs.len());
    let mut remaining = trials;
    let mut mass_left: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if k + 1 == probs.len() {
            out.push(remaining);
            break;
        }
        let count = binomial(rng, remaining, (p / mass_left).min(1.0));
        out.push(count);
        remaining -= count;
        mass_left -= p;
    }
    out
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("valid gamma shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}
