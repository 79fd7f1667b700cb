//! Fission operators.
//!
//! A rule splits one draw `X` into a training fold and a test fold such
//! that `X` is a deterministic function of both folds, `X` cannot be
//! recovered from the training fold alone, and the training fold's marginal
//! and the test fold's conditional law given the training fold are known up
//! to the unknown parameter.
//!
//! Rules never look at the true parameter while sampling. The laws they
//! declare are returned as [`LawTemplate`]s, symbolic in the unknowns, which
//! callers instantiate at a hypothesized truth.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dist::{self, DistributionSpec, Family};
use crate::error::{Error, Result};

/// Rule kinds, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    GaussianP1,
    GaussianMisspecP2,
    PoissonThinP1,
    PoissonTauP2,
    NegBinP1,
    NegBinViaPoissonP2,
    BernoulliP2,
}

impl RuleKind {
    pub const ALL: [RuleKind; 7] = [
        RuleKind::GaussianP1,
        RuleKind::GaussianMisspecP2,
        RuleKind::PoissonThinP1,
        RuleKind::PoissonTauP2,
        RuleKind::NegBinP1,
        RuleKind::NegBinViaPoissonP2,
        RuleKind::BernoulliP2,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            RuleKind::GaussianP1 => "gaussian-p1",
            RuleKind::GaussianMisspecP2 => "gaussian-misspec-p2",
            RuleKind::PoissonThinP1 => "poisson-thin-p1",
            RuleKind::PoissonTauP2 => "poisson-tau-p2",
            RuleKind::NegBinP1 => "negbin-p1",
            RuleKind::NegBinViaPoissonP2 => "negbin-via-poisson-p2",
            RuleKind::BernoulliP2 => "bernoulli-p2",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.cli_name() == name)
    }
}

/// A split recipe with its tuning parameters. Each variant carries exactly
/// the fields its recipe uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FissionRule {
    /// Gaussian with known variance `sigma_sq`; independent folds.
    GaussianP1 { eps: f64, sigma_sq: f64 },
    /// The Gaussian recipe run with a guessed variance `sigma_tilde_sq`.
    GaussianMisspecP2 { eps: f64, sigma_tilde_sq: f64 },
    /// Poisson thinning into `eps.len()` folds with probabilities `eps`.
    PoissonThinP1 { eps: Vec<f64> },
    /// Additive Poisson noise: fold1 = X + Poisson(τ), fold2 = X.
    PoissonTauP2 { tau: f64 },
    /// Negative binomial with known size `known_r`; independent folds.
    NegBinP1 { eps: f64, known_r: f64 },
    /// Poisson thinning applied to a negative binomial draw.
    NegBinViaPoissonP2 { eps: f64 },
    /// Bernoulli label flipping with probability `eps`.
    BernoulliP2 { eps: f64 },
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps = {eps} must lie in (0, 1)")))
    }
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {v} must be positive")))
    }
}

impl FissionRule {
    pub fn gaussian_p1(eps: f64, sigma_sq: f64) -> Result<Self> {
        Self::validated(FissionRule::GaussianP1 { eps, sigma_sq })
    }

    pub fn gaussian_misspec_p2(eps: f64, sigma_tilde_sq: f64) -> Result<Self> {
        Self::validated(FissionRule::GaussianMisspecP2 { eps, sigma_tilde_sq })
    }

    /// Two-fold Poisson thinning with probabilities `(eps, 1 − eps)`.
    pub fn poisson_thin(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Self::validated(FissionRule::PoissonThinP1 { eps: vec![eps, 1.0 - eps] })
    }

    pub fn poisson_thin_k(eps: Vec<f64>) -> Result<Self> {
        Self::validated(FissionRule::PoissonThinP1 { eps })
    }

    pub fn poisson_tau_p2(tau: f64) -> Result<Self> {
        Self::validated(FissionRule::PoissonTauP2 { tau })
    }

    pub fn negbin_p1(eps: f64, known_r: f64) -> Result<Self> {
        Self::validated(FissionRule::NegBinP1 { eps, known_r })
    }

    pub fn negbin_via_poisson_p2(eps: f64) -> Result<Self> {
        Self::validated(FissionRule::NegBinViaPoissonP2 { eps })
    }

    pub fn bernoulli_p2(eps: f64) -> Result<Self> {
        Self::validated(FissionRule::BernoulliP2 { eps })
    }

    fn validated(rule: Self) -> Result<Self> {
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FissionRule::GaussianP1 { eps, sigma_sq } => {
                check_eps(*eps)?;
                check_pos("sigma_sq", *sigma_sq)
            }
            FissionRule::GaussianMisspecP2 { eps, sigma_tilde_sq } => {
                check_eps(*eps)?;
                check_pos("sigma_tilde_sq", *sigma_tilde_sq)
            }
            FissionRule::PoissonThinP1 { eps } => {
                if eps.len() < 2 {
                    return Err(Error::InvalidArgument("thinning needs K >= 2 folds".into()));
                }
                for &e in eps {
                    check_eps(e)?;
                }
                let total: f64 = eps.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "thinning probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            FissionRule::PoissonTauP2 { tau } => check_pos("tau", *tau),
            FissionRule::NegBinP1 { eps, known_r } => {
                check_eps(*eps)?;
                check_pos("known_r", *known_r)
            }
            FissionRule::NegBinViaPoissonP2 { eps } | FissionRule::BernoulliP2 { eps } => check_eps(*eps),
        }
    }

    pub fn kind(&self) -> RuleKind {
        match self {
            FissionRule::GaussianP1 { .. } => RuleKind::GaussianP1,
            FissionRule::GaussianMisspecP2 { .. } => RuleKind::GaussianMisspecP2,
            FissionRule::PoissonThinP1 { .. } => RuleKind::PoissonThinP1,
            FissionRule::PoissonTauP2 { .. } => RuleKind::PoissonTauP2,
            FissionRule::NegBinP1 { .. } => RuleKind::NegBinP1,
            FissionRule::NegBinViaPoissonP2 { .. } => RuleKind::NegBinViaPoissonP2,
            FissionRule::BernoulliP2 { .. } => RuleKind::BernoulliP2,
        }
    }

    /// Whether the rule produces independent folds.
    pub fn is_p1(&self) -> bool {
        matches!(
            self,
            FissionRule::GaussianP1 { .. } | FissionRule::PoissonThinP1 { .. } | FissionRule::NegBinP1 { .. }
        )
    }

    /// Family of `X` the rule applies to.
    pub fn family(&self) -> Family {
        match self {
            FissionRule::GaussianP1 { .. } | FissionRule::GaussianMisspecP2 { .. } => Family::Gaussian,
            FissionRule::PoissonThinP1 { .. } | FissionRule::PoissonTauP2 { .. } => Family::Poisson,
            FissionRule::NegBinP1 { .. } | FissionRule::NegBinViaPoissonP2 { .. } => Family::NegBin,
            FissionRule::BernoulliP2 { .. } => Family::Bernoulli,
        }
    }

    /// Number of folds produced.
    pub fn folds(&self) -> usize {
        match self {
            FissionRule::PoissonThinP1 { eps } => eps.len(),
            _ => 2,
        }
    }

    /// Apply the rule to one draw. Two-fold Poisson thinning is returned as
    /// a [`FoldPair`] (training fold = fold 1, test fold = fold 2); use
    /// [`fission_poisson_thin`] for a [`FoldSet`].
    pub fn split<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Result<FoldPair> {
        self.validate()?;
        match self {
            FissionRule::GaussianP1 { eps, sigma_sq } => fission_gaussian_p1(x, *sigma_sq, *eps, rng),
            FissionRule::GaussianMisspecP2 { eps, sigma_tilde_sq } => {
                fission_gaussian_misspec_p2(x, *sigma_tilde_sq, *eps, rng)
            }
            FissionRule::PoissonThinP1 { eps } => {
                if eps.len() != 2 {
                    return Err(Error::InvalidArgument(
                        "K-fold thinning yields a FoldSet; use fission_poisson_thin".into(),
                    ));
                }
                let set = fission_poisson_thin(as_count(x)?, eps, rng)?;
                Ok(FoldPair {
                    fold1: set.folds[0] as f64,
                    fold2: set.folds[1] as f64,
                    reconstruction: Reconstruction::Sum,
                    rule: self.clone(),
                })
            }
            FissionRule::PoissonTauP2 { tau } => fission_poisson_tau_p2(as_count(x)?, *tau, rng),
            FissionRule::NegBinP1 { eps, known_r } => fission_negbin_p1(as_count(x)?, *known_r, *eps, rng),
            FissionRule::NegBinViaPoissonP2 { eps } => fission_negbin_via_poisson_p2(as_count(x)?, *eps, rng),
            FissionRule::BernoulliP2 { eps } => {
                let y = match as_count(x)? {
                    b @ (0 | 1) => b as u8,
                    _ => return Err(Error::InvalidArgument(format!("Bernoulli draw {x} not in {{0, 1}}"))),
                };
                fission_bernoulli_p2(y, *eps, rng)
            }
        }
    }

    /// Declared marginal law of the training fold.
    pub fn fold1_law(&self) -> LawTemplate {
        match *self {
            FissionRule::GaussianP1 { eps, sigma_sq } => LawTemplate::GaussianLinear {
                mean_scale: eps,
                var_scale: 0.0,
                var_const: eps * sigma_sq,
            },
            FissionRule::GaussianMisspecP2 { eps, sigma_tilde_sq } => LawTemplate::GaussianLinear {
                mean_scale: eps,
                var_scale: eps * eps,
                var_const: eps * (1.0 - eps) * sigma_tilde_sq,
            },
            FissionRule::PoissonThinP1 { ref eps } => LawTemplate::PoissonScaled { scale: eps[0] },
            FissionRule::PoissonTauP2 { tau } => LawTemplate::PoissonShifted { shift: tau },
            FissionRule::NegBinP1 { eps, known_r } => LawTemplate::NegBinSize { size: eps * known_r },
            FissionRule::NegBinViaPoissonP2 { eps } => LawTemplate::NegBinThinned { eps },
            FissionRule::BernoulliP2 { eps } => LawTemplate::BernoulliFlipped { eps },
        }
    }

    /// Declared law of the test fold given training-fold value `at`. For the
    /// independent-fold rules this is the test fold's marginal, whatever
    /// `at` is; for K-fold thinning it is the law of the sum of folds 2..K.
    pub fn conditional_law(&self, at: f64) -> LawTemplate {
        match *self {
            FissionRule::GaussianP1 { eps, sigma_sq } => LawTemplate::GaussianLinear {
                mean_scale: 1.0 - eps,
                var_scale: 0.0,
                var_const: (1.0 - eps) * sigma_sq,
            },
            FissionRule::GaussianMisspecP2 { eps, sigma_tilde_sq } => LawTemplate::GaussianMisspecConditional {
                eps,
                sigma_tilde_sq,
                at,
            },
            FissionRule::PoissonThinP1 { ref eps } => LawTemplate::PoissonScaled { scale: 1.0 - eps[0] },
            FissionRule::PoissonTauP2 { tau } => LawTemplate::BinomialThinned { trials: at, tau },
            FissionRule::NegBinP1 { eps, known_r } => LawTemplate::NegBinSize {
                size: (1.0 - eps) * known_r,
            },
            FissionRule::NegBinViaPoissonP2 { eps } => LawTemplate::NegBinThinnedConditional { eps, at },
            FissionRule::BernoulliP2 { eps } => LawTemplate::BernoulliConditional { eps, at },
        }
    }
}

fn as_count(x: f64) -> Result<u64> {
    if x >= 0.0 && x.fract() == 0.0 && x < 9.0e15 {
        Ok(x as u64)
    } else {
        Err(Error::InvalidArgument(format!("{x} is not a count")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reconstruction {
    /// `X = fold1 + fold2`.
    Sum,
    /// `X = fold2`.
    SecondFoldIsX,
}

/// Two realized folds and the rule that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPair {
    pub fold1: f64,
    pub fold2: f64,
    pub reconstruction: Reconstruction,
    pub rule: FissionRule,
}

impl FoldPair {
    pub fn reconstruct(&self) -> f64 {
        match self.reconstruction {
            Reconstruction::Sum => self.fold1 + self.fold2,
            Reconstruction::SecondFoldIsX => self.fold2,
        }
    }

    pub fn declared_fold1_law(&self) -> LawTemplate {
        self.rule.fold1_law()
    }

    /// Declared law of fold 2 given fold 1 = `at`.
    pub fn conditional_law(&self, at: f64) -> LawTemplate {
        self.rule.conditional_law(at)
    }
}

/// K mutually independent thinned folds; they sum to `X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSet {
    pub folds: Vec<u64>,
}

impl FoldSet {
    pub fn reconstruct(&self) -> u64 {
        self.folds.iter().sum()
    }
}

/// Free conditional on `X = x`: fold1 = εx + W with W ~ N(0, ε(1−ε)v),
/// fold2 = x − fold1.
fn gaussian_split<R: Rng + ?Sized>(x: f64, var: f64, eps: f64, rng: &mut R) -> (f64, f64) {
    let noise = Normal::new(0.0, (eps * (1.0 - eps) * var).sqrt())
        .expect("validated variance")
        .sample(rng);
    let fold1 = eps * x + noise;
    (fold1, x - fold1)
}

pub fn fission_gaussian_p1<R: Rng + ?Sized>(x: f64, sigma_sq: f64, eps: f64, rng: &mut R) -> Result<FoldPair> {
    let rule = FissionRule::gaussian_p1(eps, sigma_sq)?;
    let (fold1, fold2) = gaussian_split(x, sigma_sq, eps, rng);
    Ok(FoldPair {
        fold1,
        fold2,
        reconstruction: Reconstruction::Sum,
        rule,
    })
}

pub fn fission_gaussian_misspec_p2<R: Rng + ?Sized>(
    x: f64,
    sigma_tilde_sq: f64,
    eps: f64,
    rng: &mut R,
) -> Result<FoldPair> {
    let rule = FissionRule::gaussian_misspec_p2(eps, sigma_tilde_sq)?;
    let (fold1, fold2) = gaussian_split(x, sigma_tilde_sq, eps, rng);
    Ok(FoldPair {
        fold1,
        fold2,
        reconstruction: Reconstruction::Sum,
        rule,
    })
}

/// Multinomial(x, eps) thinning.
pub fn fission_poisson_thin<R: Rng + ?Sized>(x: u64, eps: &[f64], rng: &mut R) -> Result<FoldSet> {
    FissionRule::PoissonThinP1 { eps: eps.to_vec() }.validate()?;
    Ok(FoldSet {
        folds: dist::multinomial(rng, x, eps),
    })
}

pub fn fission_poisson_tau_p2<R: Rng + ?Sized>(x: u64, tau: f64, rng: &mut R) -> Result<FoldPair> {
    let rule = FissionRule::poisson_tau_p2(tau)?;
    let noise = dist::poisson(rng, tau);
    Ok(FoldPair {
        fold1: (x + noise) as f64,
        fold2: x as f64,
        reconstruction: Reconstruction::SecondFoldIsX,
        rule,
    })
}

/// DirichletMultinomial(x, εr, (1−ε)r), drawn as p ~ Beta(εr, (1−ε)r) then
/// fold1 ~ Binomial(x, p).
pub fn fission_negbin_p1<R: Rng + ?Sized>(x: u64, r: f64, eps: f64, rng: &mut R) -> Result<FoldPair> {
    let rule = FissionRule::negbin_p1(eps, r)?;
    let p = dist::beta(rng, eps * r, (1.0 - eps) * r);
    let fold1 = dist::binomial(rng, x, p);
    Ok(FoldPair {
        fold1: fold1 as f64,
        fold2: (x - fold1) as f64,
        reconstruction: Reconstruction::Sum,
        rule,
    })
}

pub fn fission_negbin_via_poisson_p2<R: Rng + ?Sized>(x: u64, eps: f64, rng: &mut R) -> Result<FoldPair> {
    let rule = FissionRule::negbin_via_poisson_p2(eps)?;
    let fold1 = dist::binomial(rng, x, eps);
    Ok(FoldPair {
        fold1: fold1 as f64,
        fold2: (x - fold1) as f64,
        reconstruction: Reconstruction::Sum,
        rule,
    })
}

/// fold1 = y flipped with probability ε, fold2 = y.
pub fn fission_bernoulli_p2<R: Rng + ?Sized>(y: u8, eps: f64, rng: &mut R) -> Result<FoldPair> {
    let rule = FissionRule::bernoulli_p2(eps)?;
    if y > 1 {
        return Err(Error::InvalidArgument(format!("Bernoulli draw {y} not in {{0, 1}}")));
    }
    let flip = u8::from(rng.random::<f64>() < eps);
    Ok(FoldPair {
        fold1: f64::from(y ^ flip),
        fold2: f64::from(y),
        reconstruction: Reconstruction::SecondFoldIsX,
        rule,
    })
}

/// Declared fold law, symbolic in the parameters of the law of `X`.
///
/// In the descriptions below θ is the unknown parameter of `X` (the mean
/// μ for the Gaussian), σ² the Gaussian variance and r the negative
/// binomial size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LawTemplate {
    /// N(mean_scale·μ, var_scale·σ² + var_const).
    GaussianLinear { mean_scale: f64, var_scale: f64, var_const: f64 },
    /// Law of fold 2 given fold 1 = `at` under the guessed-variance recipe,
    /// by conditioning the declared bivariate normal.
    GaussianMisspecConditional { eps: f64, sigma_tilde_sq: f64, at: f64 },
    /// Poisson(scale·θ).
    PoissonScaled { scale: f64 },
    /// Poisson(θ + shift).
    PoissonShifted { shift: f64 },
    /// Binomial(trials, θ/(θ + τ)).
    BinomialThinned { trials: f64, tau: f64 },
    /// NB(size, θ).
    NegBinSize { size: f64 },
    /// NB(r, θ/(θ + ε − εθ)).
    NegBinThinned { eps: f64 },
    /// NB(r + at, θ + ε − εθ).
    NegBinThinnedConditional { eps: f64, at: f64 },
    /// Bernoulli(θ + ε − 2θε).
    BernoulliFlipped { eps: f64 },
    /// Bernoulli(θ / (θ + (1 − θ)(ε/(1 − ε))^(2·at − 1))).
    BernoulliConditional { eps: f64, at: f64 },
}

/// Joint moments of the guessed-variance Gaussian folds, given (μ, σ²).
fn misspec_moments(eps: f64, sigma_tilde_sq: f64, sigma_sq: f64) -> (f64, f64, f64) {
    let mix = eps * (1.0 - eps) * sigma_tilde_sq;
    let v1 = eps * eps * sigma_sq + mix;
    let v2 = (1.0 - eps).powi(2) * sigma_sq + mix;
    let cov = eps * (1.0 - eps) * (sigma_sq - sigma_tilde_sq);
    (v1, v2, cov)
}

fn bernoulli_odds_factor(eps: f64, at: f64) -> f64 {
    (eps / (1.0 - eps)).powf(2.0 * at - 1.0)
}

impl LawTemplate {
    /// Family of `X` the template is written against.
    pub fn truth_family(&self) -> Family {
        match self {
            LawTemplate::GaussianLinear { .. } | LawTemplate::GaussianMisspecConditional { .. } => Family::Gaussian,
            LawTemplate::PoissonScaled { .. }
            | LawTemplate::PoissonShifted { .. }
            | LawTemplate::BinomialThinned { .. } => Family::Poisson,
            LawTemplate::NegBinSize { .. }
            | LawTemplate::NegBinThinned { .. }
            | LawTemplate::NegBinThinnedConditional { .. } => Family::NegBin,
            LawTemplate::BernoulliFlipped { .. } | LawTemplate::BernoulliConditional { .. } => Family::Bernoulli,
        }
    }

    fn check_truth(&self, truth: &DistributionSpec) -> Result<()> {
        let want = self.truth_family();
        if truth.family() == want {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                expected: want.name(),
                got: truth.family().name(),
            })
        }
    }

    /// Concrete law obtained by plugging in a hypothesized law of `X`.
    pub fn instantiate(&self, truth: &DistributionSpec) -> Result<DistributionSpec> {
        self.check_truth(truth)?;
        let p = truth.params();
        match *self {
            LawTemplate::GaussianLinear {
                mean_scale,
                var_scale,
                var_const,
            } => DistributionSpec::gaussian(mean_scale * p[0], var_scale * p[1] + var_const),
            LawTemplate::GaussianMisspecConditional { eps, sigma_tilde_sq, at } => {
                let (mu, sigma_sq) = (p[0], p[1]);
                let (v1, v2, cov) = misspec_moments(eps, sigma_tilde_sq, sigma_sq);
                let mean = (1.0 - eps) * mu + cov / v1 * (at - eps * mu);
                DistributionSpec::gaussian(mean, v2 - cov * cov / v1)
            }
            LawTemplate::PoissonScaled { scale } => DistributionSpec::poisson(scale * p[0]),
            LawTemplate::PoissonShifted { shift } => DistributionSpec::poisson(p[0] + shift),
            LawTemplate::BinomialThinned { trials, tau } => {
                DistributionSpec::new(Family::Binomial, vec![trials, p[0] / (p[0] + tau)])
            }
            LawTemplate::NegBinSize { size } => DistributionSpec::negbin(size, p[1]),
            LawTemplate::NegBinThinned { eps } => {
                let theta = p[1];
                DistributionSpec::negbin(p[0], theta / (theta + eps - eps * theta))
            }
            LawTemplate::NegBinThinnedConditional { eps, at } => {
                let theta = p[1];
                DistributionSpec::negbin(p[0] + at, theta + eps - eps * theta)
            }
            LawTemplate::BernoulliFlipped { eps } => {
                let theta = p[0];
                DistributionSpec::bernoulli(theta + eps - 2.0 * theta * eps)
            }
            LawTemplate::BernoulliConditional { eps, at } => {
                let theta = p[0];
                let k = bernoulli_odds_factor(eps, at);
                DistributionSpec::bernoulli(theta / (theta + (1.0 - theta) * k))
            }
        }
    }

    /// Closed-form Fisher information of the template's law about the
    /// primary parameter θ of `truth` (μ for the Gaussian).
    pub fn fisher_info(&self, truth: &DistributionSpec) -> Result<f64> {
        self.check_truth(truth)?;
        let p = truth.params();
        Ok(match *self {
            LawTemplate::GaussianLinear {
                mean_scale,
                var_scale,
                var_const,
            } => mean_scale * mean_scale / (var_scale * p[1] + var_const),
            LawTemplate::GaussianMisspecConditional { eps, sigma_tilde_sq, .. } => {
                let (v1, v2, cov) = misspec_moments(eps, sigma_tilde_sq, p[1]);
                let slope = (1.0 - eps) - eps * cov / v1;
                slope * slope / (v2 - cov * cov / v1)
            }
            LawTemplate::PoissonScaled { scale } => scale / p[0],
            LawTemplate::PoissonShifted { shift } => 1.0 / (p[0] + shift),
            LawTemplate::BinomialThinned { trials, tau } => {
                let theta = p[0];
                tau * trials / (theta * (theta + tau).powi(2))
            }
            LawTemplate::NegBinSize { size } => size / (p[1] * p[1] * (1.0 - p[1])),
            LawTemplate::NegBinThinned { eps } => {
                let (r, theta) = (p[0], p[1]);
                let d = theta + eps - eps * theta;
                let q = theta / d;
                let dq = eps / (d * d);
                r / (q * q * (1.0 - q)) * dq * dq
            }
            LawTemplate::NegBinThinnedConditional { eps, at } => {
                let (r, theta) = (p[0], p[1]);
                let d = theta + eps - eps * theta;
                (r + at) * (1.0 - eps).powi(2) / (d * d * (1.0 - d))
            }
            LawTemplate::BernoulliFlipped { eps } => {
                let theta = p[0];
                let a = theta + eps - 2.0 * theta * eps;
                (1.0 - 2.0 * eps).powi(2) / (a * (1.0 - a))
            }
            LawTemplate::BernoulliConditional { eps, at } => {
                let theta = p[0];
                let k = bernoulli_odds_factor(eps, at);
                let denom = theta + (1.0 - theta) * k;
                k / (denom * denom * theta * (1.0 - theta))
            }
        })
    }
}

impl fmt::Display for LawTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LawTemplate::GaussianLinear {
                mean_scale,
                var_scale,
                var_const,
            } => {
                let var = match (var_scale == 0.0, var_const == 0.0) {
                    (true, _) => format!("{var_const}"),
                    (false, true) => format!("{var_scale}·σ²"),
                    (false, false) => format!("{var_scale}·σ² + {var_const}"),
                };
                write!(f, "N({mean_scale}·μ, {var})")
            }
            LawTemplate::GaussianMisspecConditional { eps, sigma_tilde_sq, at } => write!(
                f,
                "N | fold1={at} (ε={eps}, σ̃²={sigma_tilde_sq}; symbolic in μ, σ²)"
            ),
            LawTemplate::PoissonScaled { scale } => write!(f, "Poisson({scale}·θ)"),
            LawTemplate::PoissonShifted { shift } => write!(f, "Poisson(θ + {shift})"),
            LawTemplate::BinomialThinned { trials, tau } => write!(f, "Binomial({trials}, θ/(θ + {tau}))"),
            LawTemplate::NegBinSize { size } => write!(f, "NB({size}, θ)"),
            LawTemplate::NegBinThinned { eps } => write!(f, "NB(r, θ/(θ + {eps} − {eps}·θ))"),
            LawTemplate::NegBinThinnedConditional { eps, at } => {
                write!(f, "NB(r + {at}, θ + {eps} − {eps}·θ)")
            }
            LawTemplate::BernoulliFlipped { eps } => write!(f, "Bernoulli(θ + {eps} − {}·θ)", 2.0 * eps),
            LawTemplate::BernoulliConditional { eps, at } => {
                write!(f, "Bernoulli(θ/(θ + (1 − θ)·{}))", bernoulli_odds_factor(eps, at))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::fisher_info_numeric_along;
    use crate::rng;

    #[test]
    fn zero_counts_stay_zero() {
        let mut r = rng::master(1);
        assert_eq!(fission_poisson_thin(0, &[0.2, 0.3, 0.5], &mut r).unwrap().folds, vec![0, 0, 0]);
        let nb = fission_negbin_p1(0, 4.0, 0.5, &mut r).unwrap();
        assert_eq!((nb.fold1, nb.fold2), (0.0, 0.0));
    }

    #[test]
    fn rule_validation() {
        assert!(FissionRule::bernoulli_p2(0.0).is_err());
        assert!(FissionRule::bernoulli_p2(1.0).is_err());
        assert!(FissionRule::poisson_thin_k(vec![0.5, 0.4]).is_err());
        assert!(FissionRule::poisson_thin_k(vec![1.0]).is_err());
        assert!(FissionRule::poisson_thin_k(vec![0.0, 1.0]).is_err());
        assert!(FissionRule::poisson_tau_p2(0.0).is_err());
        assert!(FissionRule::gaussian_misspec_p2(0.5, -1.0).is_err());
        assert!(FissionRule::negbin_p1(0.5, 0.0).is_err());
        assert!(FissionRule::poisson_thin_k(vec![0.2, 0.3, 0.5]).is_ok());
    }

    #[test]
    fn misspec_with_true_variance_matches_p1_path() {
        let a = fission_gaussian_p1(1.7, 2.0, 0.3, &mut rng::master(5)).unwrap();
        let b = fission_gaussian_misspec_p2(1.7, 2.0, 0.3, &mut rng::master(5)).unwrap();
        assert_eq!((a.fold1, a.fold2), (b.fold1, b.fold2));
        let truth = DistributionSpec::gaussian(0.4, 2.0).unwrap();
        let p1 = a.conditional_law(a.fold1).instantiate(&truth).unwrap();
        let p2 = b.conditional_law(b.fold1).instantiate(&truth).unwrap();
        assert!((p1.param(0) - p2.param(0)).abs() < 1e-12);
        assert!((p1.param(1) - p2.param(1)).abs() < 1e-12);
    }

    #[test]
    fn conditional_law_examples() {
        let truth = DistributionSpec::gaussian(3.0, 2.0).unwrap();
        let rule = FissionRule::gaussian_p1(0.3, 2.0).unwrap();
        for at in [-5.0, 0.0, 12.0] {
            let law = rule.conditional_law(at).instantiate(&truth).unwrap();
            assert!((law.param(0) - 0.7 * 3.0).abs() < 1e-12);
            assert!((law.param(1) - 0.7 * 2.0).abs() < 1e-12);
        }

        let pair = fission_poisson_tau_p2(0, 1.0, &mut rng::master(2)).unwrap();
        let at_zero = pair.conditional_law(0.0).instantiate(&DistributionSpec::poisson(2.0).unwrap()).unwrap();
        assert!(at_zero.log_mass(0.0).unwrap().abs() < 1e-15);

        let bern = FissionRule::bernoulli_p2(0.8).unwrap().conditional_law(0.0);
        assert_eq!(bern.to_string(), format!("Bernoulli(θ/(θ + (1 − θ)·{}))", bernoulli_odds_factor(0.8, 0.0)));
        for theta in [0.1, 0.6, 0.9] {
            let law = bern.instantiate(&DistributionSpec::bernoulli(theta).unwrap()).unwrap();
            let want = theta / (theta + (1.0 - theta) * 0.25);
            assert!((law.param(0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn half_flip_conditional_is_the_prior() {
        let rule = FissionRule::bernoulli_p2(0.5).unwrap();
        for theta in [0.2, 0.5, 0.77] {
            let truth = DistributionSpec::bernoulli(theta).unwrap();
            for at in [0.0, 1.0] {
                let law = rule.conditional_law(at).instantiate(&truth).unwrap();
                assert!((law.param(0) - theta).abs() < 1e-15);
            }
            assert!((rule.fold1_law().instantiate(&truth).unwrap().param(0) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn template_information_matches_numeric_oracle() {
        let cases: Vec<(LawTemplate, DistributionSpec)> = vec![
            (
                FissionRule::gaussian_p1(0.3, 2.0).unwrap().fold1_law(),
                DistributionSpec::gaussian(1.0, 2.0).unwrap(),
            ),
            (
                FissionRule::gaussian_misspec_p2(0.4, 3.0).unwrap().fold1_law(),
                DistributionSpec::gaussian(1.0, 1.5).unwrap(),
            ),
            (
                FissionRule::gaussian_misspec_p2(0.4, 3.0).unwrap().conditional_law(0.8),
                DistributionSpec::gaussian(1.0, 1.5).unwrap(),
            ),
            (LawTemplate::PoissonScaled { scale: 0.3 }, DistributionSpec::poisson(2.0).unwrap()),
            (LawTemplate::PoissonShifted { shift: 1.5 }, DistributionSpec::poisson(2.0).unwrap()),
            (
                LawTemplate::BinomialThinned { trials: 6.0, tau: 1.5 },
                DistributionSpec::poisson(2.0).unwrap(),
            ),
            (LawTemplate::NegBinSize { size: 1.2 }, DistributionSpec::negbin(4.0, 0.4).unwrap()),
            (LawTemplate::NegBinThinned { eps: 0.3 }, DistributionSpec::negbin(3.0, 0.4).unwrap()),
            (
                LawTemplate::NegBinThinnedConditional { eps: 0.3, at: 2.0 },
                DistributionSpec::negbin(3.0, 0.4).unwrap(),
            ),
            (LawTemplate::BernoulliFlipped { eps: 0.8 }, DistributionSpec::bernoulli(0.6).unwrap()),
            (
                LawTemplate::BernoulliConditional { eps: 0.8, at: 1.0 },
                DistributionSpec::bernoulli(0.6).unwrap(),
            ),
            (
                LawTemplate::BernoulliConditional { eps: 0.3, at: 0.0 },
                DistributionSpec::bernoulli(0.25).unwrap(),
            ),
        ];
        for (template, truth) in cases {
            let idx = truth.primary_index();
            let exact = template.fisher_info(&truth).unwrap();
            let numeric = fisher_info_numeric_along(
                |v| template.instantiate(&truth.with_param(idx, v)?),
                truth.primary(),
                1e-5,
            )
            .unwrap();
            assert!(((numeric - exact) / exact).abs() < 1e-4, "{template}: {numeric} vs {exact}");
        }
    }

    #[test]
    fn template_family_mismatch() {
        let t = LawTemplate::PoissonScaled { scale: 0.5 };
        assert!(matches!(
            t.instantiate(&DistributionSpec::bernoulli(0.5).unwrap()),
            Err(Error::FamilyMismatch { .. })
        ));
    }
}
