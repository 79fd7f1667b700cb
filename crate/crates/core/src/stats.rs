//! Goodness-of-fit tests and small summary helpers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};

/// Minimum expected count per chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

pub fn std_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn chi_square_sf(statistic: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).expect("positive df").sf(statistic)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n − 1`.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (variance(xs) * variance(ys)).sqrt()
}

/// Monte-Carlo standard error of the sample covariance, from the empirical
/// variance of the centred cross products.
pub fn covariance_se(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    (variance(&prods) / prods.len() as f64).sqrt()
}

fn tally(samples: &[f64]) -> Result<BTreeMap<u64, u64>> {
    let mut counts = BTreeMap::new();
    for &s in samples {
        if !(s >= 0.0 && s.fract() == 0.0) {
            return Err(Error::InvalidArgument(format!("non-count sample {s}")));
        }
        *counts.entry(s as u64).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Pearson chi-square test of count samples against a discrete scalar law.
///
/// Support points are pooled left to right into bins holding expected count
/// at least [`MIN_EXPECTED`]; the last bin is the open upper tail.
pub fn chi_square_gof(samples: &[f64], law: &DistributionSpec) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let n = samples.len() as f64;
    let counts = tally(samples)?;
    let mut support = Vec::new();
    law.for_each_support_point(|x, m| support.push((x as u64, m)))?;

    // (first support value, expected mass)
    let mut bins: Vec<(u64, f64)> = Vec::new();
    let mut open: Option<(u64, f64)> = None;
    for &(x, m) in &support {
        let start = open.map_or(x, |(s, _)| s);
        let mass = open.map_or(0.0, |(_, acc)| acc) + m;
        if mass * n >= MIN_EXPECTED {
            bins.push((start, mass));
            open = None;
        } else {
            open = Some((start, mass));
        }
    }
    let closed_mass: f64 = bins.iter().map(|b| b.1).sum();
    let tail_mass = (1.0 - closed_mass).max(0.0);
    match bins.last_mut() {
        Some(last) if tail_mass * n < MIN_EXPECTED || open.is_some() => last.1 += tail_mass,
        Some(_) => bins.push((open.map_or(support.last().unwrap().0 + 1, |o| o.0), tail_mass)),
        None => return Err(Error::InvalidArgument("too few samples for any bin".into())),
    }
    if bins.len() < 2 {
        return Ok(TestResult {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
        });
    }
    let mut observed = vec![0u64; bins.len()];
    for (&value, &c) in &counts {
        let idx = bins.partition_point(|b| b.0 <= value).saturating_sub(1);
        observed[idx] += c;
    }
    let statistic: f64 = bins
        .iter()
        .zip(&observed)
        .map(|(&(_, mass), &o)| {
            let e = mass * n;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = bins.len() - 1;
    Ok(TestResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    })
}

/// Category boundaries for a margin such that each category holds at least
/// `min_count` observations; sparse upper remainders join the last category.
fn margin_categories(counts: &BTreeMap<u64, u64>, min_count: u64) -> Vec<u64> {
    let mut starts = Vec::new();
    let mut acc = 0;
    let mut start = None;
    for (&v, &c) in counts {
        start.get_or_insert(v);
        acc += c;
        if acc >= min_count {
            starts.push(start.take().unwrap());
            acc = 0;
        }
    }
    if starts.is_empty() {
        starts.push(*counts.keys().next().unwrap());
    }
    starts
}

/// Pearson chi-square test of independence between two count samples.
///
/// Each margin is pooled into categories of at least `√(5N)` observations,
/// which keeps every expected cell count at or above five.
pub fn chi_square_independence(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument("paired samples of equal nonzero length required".into()));
    }
    let n = a.len() as f64;
    let min_count = (MIN_EXPECTED * n).sqrt().ceil() as u64;
    let rows = margin_categories(&tally(a)?, min_count);
    let cols = margin_categories(&tally(b)?, min_count);
    let locate = |cats: &[u64], v: f64| cats.partition_point(|&s| s as f64 <= v).saturating_sub(1);
    let mut table = vec![vec![0.0f64; cols.len()]; rows.len()];
    for (&x, &y) in a.iter().zip(b) {
        table[locate(&rows, x)][locate(&cols, y)] += 1.0;
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..cols.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = row_tot[i] * col_tot[j] / n;
            statistic += (o - e).powi(2) / e;
        }
    }
    let df = (rows.len() - 1) * (cols.len() - 1);
    Ok(TestResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
    })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF, with
/// Stephens' finite-sample scaling of the statistic.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / m).max((i as f64 + 1.0) / m - f);
    }
    let root = m.sqrt();
    Ok(TestResult {
        statistic: d,
        df: sorted.len(),
        p_value: kolmogorov_sf((root + 0.12 + 0.11 / root) * d),
    })
}

/// KS test of p-values against Uniform(0, 1).
pub fn ks_uniform(p_values: &[f64]) -> Result<TestResult> {
    ks_test(p_values, |x| x.clamp(0.0, 1.0))
}
