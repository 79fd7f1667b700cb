//! Fisher-information accounting across folds.
//!
//! For any fission rule the information in `X` splits as
//! `I_X = I_fold1 + E[I_fold2|fold1]`. For independent-fold rules the
//! conditional term is the (constant) information of the test fold's
//! marginal; for dependent-fold rules it is a random quantity whose
//! expectation, and the expectation of its inverse, are assessed here.
//!
//! Conditional informations are always evaluated in closed form; Monte
//! Carlo only averages them over sampled training-fold values. Infinite
//! expected inverses are detected by enumerating the training fold's
//! declared law for atoms that carry zero conditional information.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::fission::{FissionRule, LawTemplate};

/// Tolerance on training-fold information for calibrated comparisons.
pub const CALIBRATION_TOL: f64 = 1e-6;

/// `E[(I_fold2|fold1)⁻¹]`, which may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InverseInfo {
    Finite {
        value: f64,
        se: f64,
    },
    /// A training-fold value with positive mass carries zero conditional
    /// information. `mass` is the total such mass, `at` the smallest such
    /// value.
    Infinite {
        at: f64,
        mass: f64,
    },
}

impl InverseInfo {
    pub fn is_infinite(&self) -> bool {
        matches!(self, InverseInfo::Infinite { .. })
    }

    pub fn value(&self) -> f64 {
        match *self {
            InverseInfo::Finite { value, .. } => value,
            InverseInfo::Infinite { .. } => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSe {
    pub e_cond_info: f64,
    pub e_inverse_cond_info: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub rule: FissionRule,
    pub truth: DistributionSpec,
    pub i_x: f64,
    pub i_fold1: f64,
    /// Test-fold marginal information; independent-fold rules only.
    pub i_fold2_marginal: Option<f64>,
    pub e_cond_info: f64,
    pub e_inverse_cond_info: InverseInfo,
    pub mc_se: McSe,
    pub n_mc: usize,
}

impl InfoReport {
    /// `I_fold1 + E[I_fold2|fold1] − I_X`.
    pub fn chain_rule_gap(&self) -> f64 {
        self.i_fold1 + self.e_cond_info - self.i_x
    }
}

fn check_pair(rule: &FissionRule, truth: &DistributionSpec) -> Result<()> {
    rule.validate()?;
    if rule.family() != truth.family() {
        return Err(Error::NotImplemented(format!(
            "information audit of {:?} against {}",
            rule.kind(),
            truth.family()
        )));
    }
    if let FissionRule::GaussianP1 { sigma_sq, .. } = rule {
        if (sigma_sq - truth.param(1)).abs() > 1e-12 * sigma_sq {
            return Err(Error::InvalidArgument(format!(
                "known-variance rule uses σ² = {sigma_sq} but truth has σ² = {}",
                truth.param(1)
            )));
        }
    }
    if let FissionRule::NegBinP1 { known_r, .. } = rule {
        if (known_r - truth.param(0)).abs() > 1e-12 * known_r {
            return Err(Error::InvalidArgument(format!(
                "known-size rule uses r = {known_r} but truth has r = {}",
                truth.param(0)
            )));
        }
    }
    Ok(())
}

/// Training-fold values drawn by sampling `X` from `truth` and splitting it.
fn sample_fold1<R: Rng + ?Sized>(
    rule: &FissionRule,
    truth: &DistributionSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_mc < 2 {
        return Err(Error::InvalidArgument("n_mc must be at least 2".into()));
    }
    let rule = match rule {
        // Only the first fold matters; collapse K-fold thinning to two folds.
        FissionRule::PoissonThinP1 { eps } if eps.len() > 2 => FissionRule::poisson_thin(eps[0])?,
        other => other.clone(),
    };
    (0..n_mc)
        .map(|_| {
            let x = truth.draw_scalar(rng);
            Ok(rule.split(x, rng)?.fold1)
        })
        .collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn conditional_infos(rule: &FissionRule, truth: &DistributionSpec, fold1: &[f64]) -> Result<Vec<f64>> {
    fold1
        .iter()
        .map(|&at| rule.conditional_law(at).fisher_info(truth))
        .collect()
}

/// Training-fold atoms with zero conditional information, from exact
/// enumeration of the declared training-fold law.
fn zero_information_atoms(rule: &FissionRule, truth: &DistributionSpec) -> Result<Option<(f64, f64)>> {
    let law = rule.fold1_law().instantiate(truth)?;
    if !law.family().is_discrete() {
        return Ok(None);
    }
    let mut first = None;
    let mut mass = 0.0;
    let mut failure = None;
    law.for_each_support_point(|at, m| {
        if m <= 0.0 || failure.is_some() {
            return;
        }
        match rule.conditional_law(at).fisher_info(truth) {
            Ok(info) if info == 0.0 => {
                first.get_or_insert(at);
                mass += m;
            }
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(first.map(|at| (at, mass)))
}

fn inverse_info_from(
    rule: &FissionRule,
    truth: &DistributionSpec,
    cond_infos: impl FnOnce() -> Result<Vec<f64>>,
) -> Result<InverseInfo> {
    if rule.is_p1() {
        let marginal = rule.conditional_law(0.0).fisher_info(truth)?;
        return Ok(InverseInfo::Finite {
            value: 1.0 / marginal,
            se: 0.0,
        });
    }
    if let Some((at, mass)) = zero_information_atoms(rule, truth)? {
        return Ok(InverseInfo::Infinite { at, mass });
    }
    let inverses: Vec<f64> = cond_infos()?.iter().map(|i| 1.0 / i).collect();
    let (value, se) = mean_and_se(&inverses);
    Ok(InverseInfo::Finite { value, se })
}

/// Information decomposition of `rule` applied to `X ~ truth`.
pub fn chain_rule_check<R: Rng + ?Sized>(
    rule: &FissionRule,
    truth: &DistributionSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<InfoReport> {
    check_pair(rule, truth)?;
    let i_x = truth.fisher_info(truth.primary_index())?;
    let i_fold1 = rule.fold1_law().fisher_info(truth)?;
    if rule.is_p1() {
        let marginal = rule.conditional_law(0.0).fisher_info(truth)?;
        return Ok(InfoReport {
            rule: rule.clone(),
            truth: truth.clone(),
            i_x,
            i_fold1,
            i_fold2_marginal: Some(marginal),
            e_cond_info: marginal,
            e_inverse_cond_info: InverseInfo::Finite {
                value: 1.0 / marginal,
                se: 0.0,
            },
            mc_se: McSe {
                e_cond_info: 0.0,
                e_inverse_cond_info: 0.0,
            },
            n_mc,
        });
    }
    let fold1 = sample_fold1(rule, truth, n_mc, rng)?;
    let infos = conditional_infos(rule, truth, &fold1)?;
    let (e_cond_info, se_cond) = mean_and_se(&infos);
    let inverse = inverse_info_from(rule, truth, || Ok(infos.clone()))?;
    let se_inverse = match inverse {
        InverseInfo::Finite { se, .. } => se,
        InverseInfo::Infinite { .. } => f64::NAN,
    };
    Ok(InfoReport {
        rule: rule.clone(),
        truth: truth.clone(),
        i_x,
        i_fold1,
        i_fold2_marginal: None,
        e_cond_info,
        e_inverse_cond_info: inverse,
        mc_se: McSe {
            e_cond_info: se_cond,
            e_inverse_cond_info: se_inverse,
        },
        n_mc,
    })
}

/// `τ X̃⁽¹⁾ / (θ (θ + τ)²)`: information about θ in the test fold of the
/// additive-noise Poisson rule, given training-fold value `fold1_value`.
pub fn conditional_info_poisson_tau(theta: f64, tau: f64, fold1_value: f64) -> Result<f64> {
    if !(theta > 0.0 && tau > 0.0 && fold1_value >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need θ > 0, τ > 0, fold1 ≥ 0 (got {theta}, {tau}, {fold1_value})"
        )));
    }
    LawTemplate::BinomialThinned {
        trials: fold1_value,
        tau,
    }
    .fisher_info(&DistributionSpec::poisson(theta)?)
}

/// `E[(I_fold2|fold1)⁻¹]` for `rule` applied to `X ~ truth`.
pub fn expected_inverse_cond_info<R: Rng + ?Sized>(
    rule: &FissionRule,
    truth: &DistributionSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<InverseInfo> {
    check_pair(rule, truth)?;
    inverse_info_from(rule, truth, || {
        let fold1 = sample_fold1(rule, truth, n_mc, rng)?;
        conditional_infos(rule, truth, &fold1)
    })
}

/// τ giving the additive-noise Poisson rule the same training-fold
/// information as Poisson thinning with training probability ε:
/// `1/(θ + τ) = ε/θ`, so `τ = θ(1 − ε)/ε`.
pub fn calibrate_equal_training_info(p1_rule: &FissionRule, truth: &DistributionSpec) -> Result<f64> {
    p1_rule.validate()?;
    match (p1_rule, truth.family()) {
        (FissionRule::PoissonThinP1 { eps }, Family::Poisson) => {
            let theta = truth.param(0);
            Ok(theta * (1.0 - eps[0]) / eps[0])
        }
        _ => Err(Error::NotImplemented(format!(
            "calibration of {:?} against {}",
            p1_rule.kind(),
            truth.family()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    /// `E[(I_fold2|fold1)⁻¹]` under the second rule.
    pub lhs: InverseInfo,
    /// `(I_fold2)⁻¹` under the independent-fold rule.
    pub rhs: f64,
    pub holds: bool,
    /// `lhs − rhs`; infinite when `lhs` is.
    pub margin: f64,
    pub training_info: f64,
}

/// Checks `E[(I_fold2|fold1)⁻¹] ≥ (I_fold2)⁻¹` for an independent-fold rule
/// and a second rule that allocates the same training information. The
/// finite case is accepted within three Monte-Carlo standard errors.
pub fn inverse_info_inequality_check<R: Rng + ?Sized>(
    p1_rule: &FissionRule,
    p2_rule: &FissionRule,
    truth: &DistributionSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<InequalityCheck> {
    if truth.family() == Family::Bernoulli {
        return Err(Error::NotApplicable(
            "the Bernoulli family admits no independent-fold split".into(),
        ));
    }
    if !p1_rule.is_p1() {
        return Err(Error::NotApplicable(format!("{:?} does not give independent folds", p1_rule.kind())));
    }
    check_pair(p1_rule, truth)?;
    check_pair(p2_rule, truth)?;
    let info1 = p1_rule.fold1_law().fisher_info(truth)?;
    let info2 = p2_rule.fold1_law().fisher_info(truth)?;
    if (info1 - info2).abs() > CALIBRATION_TOL {
        return Err(Error::CalibrationMismatch { p1: info1, p2: info2 });
    }
    let rhs = 1.0 / p1_rule.conditional_law(0.0).fisher_info(truth)?;
    let lhs = expected_inverse_cond_info(p2_rule, truth, n_mc, rng)?;
    let (holds, margin) = match lhs {
        InverseInfo::Infinite { .. } => (true, f64::INFINITY),
        InverseInfo::Finite { value, se } => (value >= rhs - 3.0 * se, value - rhs),
    };
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds,
        margin,
        training_info: info1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::fisher_info_numeric_along;
    use crate::rng;

    fn poisson(theta: f64) -> DistributionSpec {
        DistributionSpec::poisson(theta).unwrap()
    }

    #[test]
    fn poisson_thinning_decomposition() {
        let r = chain_rule_check(&FissionRule::poisson_thin(0.3).unwrap(), &poisson(2.0), 10, &mut rng::master(1))
            .unwrap();
        assert!((r.i_fold1 - 0.15).abs() < 1e-15);
        assert!((r.i_fold2_marginal.unwrap() - 0.35).abs() < 1e-15);
        assert!((r.i_fold1 + r.i_fold2_marginal.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(r.e_cond_info, r.i_fold2_marginal.unwrap());
        // Oracle: numeric information of Poisson(εθ) along θ.
        let numeric = fisher_info_numeric_along(|t| DistributionSpec::poisson(0.3 * t), 2.0, 1e-5).unwrap();
        assert!((numeric - 0.15).abs() < 1e-6);
    }

    #[test]
    fn additive_noise_decomposition() {
        let rule = FissionRule::poisson_tau_p2(2.0).unwrap();
        let r = chain_rule_check(&rule, &poisson(2.0), 100_000, &mut rng::master(2)).unwrap();
        assert_eq!(r.i_fold1, 0.25);
        assert!((r.e_cond_info - 0.25).abs() < 3.0 * r.mc_se.e_cond_info, "{r:?}");
        assert!(r.e_inverse_cond_info.is_infinite());
    }

    #[test]
    fn half_flip_bernoulli_moves_everything_to_the_test_fold() {
        let rule = FissionRule::bernoulli_p2(0.5).unwrap();
        for theta in [0.2, 0.6] {
            let truth = DistributionSpec::bernoulli(theta).unwrap();
            let r = chain_rule_check(&rule, &truth, 1000, &mut rng::master(3)).unwrap();
            assert_eq!(r.i_fold1, 0.0);
            assert!((r.e_cond_info - r.i_x).abs() < 1e-12);
            match r.e_inverse_cond_info {
                InverseInfo::Finite { value, se } => {
                    assert!((value - 1.0 / r.i_x).abs() < 1e-12);
                    assert!(se < 1e-12);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn conditional_info_values() {
        assert_eq!(conditional_info_poisson_tau(2.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((conditional_info_poisson_tau(1.0, 1.0, 4.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((conditional_info_poisson_tau(2.0, 1.0, 9.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(conditional_info_poisson_tau(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn expected_inverse_examples() {
        let inf = expected_inverse_cond_info(
            &FissionRule::poisson_tau_p2(1.0).unwrap(),
            &poisson(2.0),
            100,
            &mut rng::master(4),
        )
        .unwrap();
        match inf {
            InverseInfo::Infinite { at, mass } => {
                assert_eq!(at, 0.0);
                assert!((mass - (-3.0f64).exp()).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let p1 = expected_inverse_cond_info(
            &FissionRule::poisson_thin(0.5).unwrap(),
            &poisson(2.0),
            100,
            &mut rng::master(4),
        )
        .unwrap();
        assert!((p1.value() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn calibration_examples() {
        let c = |theta: f64, eps: f64| {
            calibrate_equal_training_info(&FissionRule::poisson_thin(eps).unwrap(), &poisson(theta)).unwrap()
        };
        assert!((c(2.0, 0.5) - 2.0).abs() < 1e-12);
        assert!((c(3.0, 0.25) - 9.0).abs() < 1e-12);
        assert!(c(2.0, 1.0 - 1e-9) < 1e-8);
        // Defining equation via closed forms, and via numeric information.
        for (theta, eps) in [(2.0, 0.5), (3.0, 0.25), (0.7, 0.9)] {
            let tau = c(theta, eps);
            assert!((1.0 / (theta + tau) - eps / theta).abs() < 1e-10);
            let numeric_p2 = fisher_info_numeric_along(|t| DistributionSpec::poisson(t + tau), theta, 1e-5).unwrap();
            let numeric_p1 = fisher_info_numeric_along(|t| DistributionSpec::poisson(eps * t), theta, 1e-5).unwrap();
            assert!((numeric_p1 - numeric_p2).abs() < 1e-6);
        }
        assert!(calibrate_equal_training_info(
            &FissionRule::negbin_p1(0.5, 2.0).unwrap(),
            &DistributionSpec::negbin(2.0, 0.5).unwrap()
        )
        .is_err());
    }

    #[test]
    fn inequality_examples() {
        let truth = poisson(2.0);
        let p1 = FissionRule::poisson_thin(0.5).unwrap();
        let tau = calibrate_equal_training_info(&p1, &truth).unwrap();
        let p2 = FissionRule::poisson_tau_p2(tau).unwrap();
        let check = inverse_info_inequality_check(&p1, &p2, &truth, 1000, &mut rng::master(5)).unwrap();
        assert!(check.holds && check.lhs.is_infinite());
        assert!((check.rhs - 4.0).abs() < 1e-12);

        let same = inverse_info_inequality_check(&p1, &p1, &truth, 1000, &mut rng::master(5)).unwrap();
        assert!(same.holds && same.margin.abs() < 1e-12);

        let bern = FissionRule::bernoulli_p2(0.3).unwrap();
        assert!(matches!(
            inverse_info_inequality_check(&bern, &bern, &DistributionSpec::bernoulli(0.4).unwrap(), 10, &mut rng::master(6)),
            Err(Error::NotApplicable(_))
        ));

        let off = FissionRule::poisson_tau_p2(1.0).unwrap();
        assert!(matches!(
            inverse_info_inequality_check(&p1, &off, &truth, 10, &mut rng::master(7)),
            Err(Error::CalibrationMismatch { .. })
        ));
    }

    #[test]
    fn chain_rule_and_jensen_on_grids() {
        let mut stream = 100;
        let mut next = || {
            stream += 1;
            rng::child(8, stream)
        };
        for &theta in &[0.2, 0.5, 0.8] {
            for &eps in &[0.2, 0.5, 0.7] {
                let cases = vec![
                    (FissionRule::bernoulli_p2(eps).unwrap(), DistributionSpec::bernoulli(theta).unwrap()),
                    (FissionRule::negbin_via_poisson_p2(eps).unwrap(), DistributionSpec::negbin(3.0, theta).unwrap()),
                    (FissionRule::negbin_p1(eps, 3.0).unwrap(), DistributionSpec::negbin(3.0, theta).unwrap()),
                    (FissionRule::poisson_thin(eps).unwrap(), poisson(5.0 * theta)),
                    (FissionRule::poisson_tau_p2(5.0 * eps).unwrap(), poisson(5.0 * theta)),
                    (
                        FissionRule::gaussian_misspec_p2(eps, 4.0 * theta).unwrap(),
                        DistributionSpec::gaussian(1.0, 1.0).unwrap(),
                    ),
                    (FissionRule::gaussian_p1(eps, 2.0).unwrap(), DistributionSpec::gaussian(theta, 2.0).unwrap()),
                ];
                for (rule, truth) in cases {
                    let r = chain_rule_check(&rule, &truth, 20_000, &mut next()).unwrap();
                    let tol = 3.0 * r.mc_se.e_cond_info + 1e-12 * r.i_x;
                    assert!(r.chain_rule_gap().abs() <= tol, "{rule:?} {truth}: {r:?}");
                    if let InverseInfo::Finite { value, se } = r.e_inverse_cond_info {
                        assert!(value >= 1.0 / r.e_cond_info - 3.0 * (se + r.mc_se.e_cond_info / r.e_cond_info.powi(2)) - 1e-10 * value, "{rule:?} {truth}: {r:?}");
                    }
                    assert!(r.i_fold1 >= 0.0 && r.e_cond_info >= 0.0);
                }
            }
        }
    }
}
