//! Empirical checks of a fission rule against the laws it declares.

#![allow(dead_code)]

use std::collections::BTreeMap;

use fission_core::dist::{DistributionSpec, Family};
use fission_core::fission::FissionRule;
use fission_core::rng;
use fission_core::stats::{chi_square_gof, chi_square_independence, ks_test, ks_uniform, TestResult};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Smallest group of equal training-fold values tested on its own.
const MIN_GROUP: usize = 300;

#[derive(Debug, Clone)]
pub struct Fidelity {
    pub label: String,
    pub n: usize,
    pub reconstructed: usize,
    pub fold1_marginal: TestResult,
    /// Test fold against its declared law given the training fold.
    pub conditional: TestResult,
    /// Fold independence, for the independent-fold rules.
    pub independence: Option<TestResult>,
}

impl Fidelity {
    pub fn passes(&self, alpha: f64) -> bool {
        self.reconstructed == self.n
            && self.fold1_marginal.p_value > alpha
            && self.conditional.p_value > alpha
            && self.independence.as_ref().is_none_or(|t| t.p_value > alpha)
    }
}

fn normal_cdf(law: &DistributionSpec) -> impl Fn(f64) -> f64 {
    let n = Normal::new(law.param(0), law.param(1).sqrt()).unwrap();
    move |x| n.cdf(x)
}

/// Sums independent chi-square statistics.
fn combine(tests: &[TestResult]) -> TestResult {
    let statistic: f64 = tests.iter().map(|t| t.statistic).sum();
    let df: usize = tests.iter().map(|t| t.df).sum();
    let p_value = if df == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(df as f64).unwrap().cdf(statistic)
    };
    TestResult {
        statistic,
        df,
        p_value,
    }
}

/// Ranks mapped to `bins` equal-count categories.
fn rank_bins(xs: &[f64], bins: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (rank * bins / xs.len()) as f64;
    }
    out
}

pub fn check_rule(label: &str, rule: &FissionRule, truth: &DistributionSpec, n: usize, seed: u64) -> Fidelity {
    let mut r = rng::master(seed);
    let xs = truth.sample(&mut r, n).unwrap();
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    let continuous = truth.family() == Family::Gaussian;
    let mut reconstructed = 0;
    for &x in &xs {
        let pair = rule.split(x, &mut r).unwrap();
        let exact = if continuous {
            (pair.reconstruct() - x).abs() <= 1e-12 * x.abs().max(1.0)
        } else {
            pair.reconstruct() == x
        };
        reconstructed += usize::from(exact);
        f1.push(pair.fold1);
        f2.push(pair.fold2);
    }

    let law1 = rule.fold1_law().instantiate(truth).unwrap();
    let fold1_marginal = if continuous {
        ks_test(&f1, normal_cdf(&law1)).unwrap()
    } else {
        chi_square_gof(&f1, &law1).unwrap()
    };

    let conditional = if continuous {
        // Probability integral transform under each draw's conditional law.
        let u: Vec<f64> = f1
            .iter()
            .zip(&f2)
            .map(|(&a, &b)| normal_cdf(&rule.conditional_law(a).instantiate(truth).unwrap())(b))
            .collect();
        ks_uniform(&u).unwrap()
    } else {
        let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for (&a, &b) in f1.iter().zip(&f2) {
            groups.entry(a as u64).or_default().push(b);
        }
        let tests: Vec<TestResult> = groups
            .iter()
            .filter(|(_, g)| g.len() >= MIN_GROUP)
            .map(|(&a, g)| chi_square_gof(g, &rule.conditional_law(a as f64).instantiate(truth).unwrap()).unwrap())
            .collect();
        assert!(!tests.is_empty(), "{label}: no training-fold value reached {MIN_GROUP} draws");
        combine(&tests)
    };

    let independence = rule.is_p1().then(|| {
        if continuous {
            chi_square_independence(&rank_bins(&f1, 10), &rank_bins(&f2, 10)).unwrap()
        } else {
            chi_square_independence(&f1, &f2).unwrap()
        }
    });

    Fidelity {
        label: label.to_string(),
        n,
        reconstructed,
        fold1_marginal,
        conditional,
        independence,
    }
}

/// One rule of every kind, each applied to a matching law.
pub fn standard_cases() -> Vec<(&'static str, FissionRule, DistributionSpec)> {
    vec![
        (
            "gaussian-p1",
            FissionRule::gaussian_p1(0.3, 2.0).unwrap(),
            DistributionSpec::gaussian(1.5, 2.0).unwrap(),
        ),
        (
            "gaussian-misspec-p2",
            FissionRule::gaussian_misspec_p2(0.5, 4.0).unwrap(),
            DistributionSpec::gaussian(-1.0, 1.0).unwrap(),
        ),
        (
            "poisson-thin-p1",
            FissionRule::poisson_thin(0.4).unwrap(),
            DistributionSpec::poisson(3.0).unwrap(),
        ),
        (
            "poisson-tau-p2",
            FissionRule::poisson_tau_p2(2.0).unwrap(),
            DistributionSpec::poisson(2.0).unwrap(),
        ),
        (
            "negbin-p1",
            FissionRule::negbin_p1(0.5, 3.0).unwrap(),
            DistributionSpec::negbin(3.0, 0.4).unwrap(),
        ),
        (
            "negbin-via-poisson-p2",
            FissionRule::negbin_via_poisson_p2(0.5).unwrap(),
            DistributionSpec::negbin(3.0, 0.4).unwrap(),
        ),
        (
            "bernoulli-p2",
            FissionRule::bernoulli_p2(0.2).unwrap(),
            DistributionSpec::bernoulli(0.35).unwrap(),
        ),
    ]
}
