use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, Result};
use crate::glm::CoefInference;
use crate::selective::Method;

/// Inference for coefficient `coef`: 0 is the intercept, `j ≥ 1` is design
/// column `j − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefRecord {
    pub coef: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
}

impl CoefRecord {
    pub fn new(coef: usize, inf: &CoefInference) -> Self {
        Self {
            coef,
            estimate: inf.estimate,
            se: inf.se,
            ci_lower: inf.ci_lower,
            ci_upper: inf.ci_upper,
            p_value: inf.p_value,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub method: Method,
    pub lambda: f64,
    pub empty_selection: bool,
    /// Intercept first, then selected coefficients in ascending order.
    pub coefs: Vec<CoefRecord>,
}

impl ReplicateRecord {
    /// Selected coefficient labels (1-based).
    pub fn selected(&self) -> Vec<usize> {
        self.coefs.iter().filter(|c| c.coef > 0).map(|c| c.coef).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: u64,
    pub message: String,
}

/// Counts for one slope across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefAggregate {
    pub coef: usize,
    pub truth: f64,
    pub n_selected: usize,
    pub n_covered: usize,
    pub n_rejected: usize,
    pub selection: f64,
    pub selection_se: f64,
    /// Undefined when the coefficient was never selected.
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    pub rejection: Option<f64>,
    pub rejection_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregates {
    pub method: Method,
    pub n_replicates: usize,
    pub n_empty: usize,
    pub mean_selected: f64,
    pub coefs: Vec<CoefAggregate>,
}

fn proportion(k: usize, n: usize) -> (f64, f64) {
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn conditional(k: usize, n: usize) -> (Option<f64>, Option<f64>) {
    if n == 0 {
        (None, None)
    } else {
        let (p, se) = proportion(k, n);
        (Some(p), Some(se))
    }
}

fn coef_aggregate(coef: usize, truth: f64, n_reps: usize, sel: usize, cov: usize, rej: usize) -> CoefAggregate {
    let (selection, selection_se) = if n_reps == 0 {
        (0.0, 0.0)
    } else {
        proportion(sel, n_reps)
    };
    let (coverage, coverage_se) = conditional(cov, sel);
    let (rejection, rejection_se) = conditional(rej, sel);
    CoefAggregate {
        coef,
        truth,
        n_selected: sel,
        n_covered: cov,
        n_rejected: rej,
        selection,
        selection_se,
        coverage,
        coverage_se,
        rejection,
        rejection_se,
    }
}

/// Streaming per-method aggregation; records are pushed in replicate order.
#[derive(Debug, Clone)]
pub struct Aggregator {
    method: Method,
    truth: Vec<f64>,
    alpha: f64,
    n_replicates: usize,
    n_empty: usize,
    total_selected: usize,
    selected: Vec<usize>,
    covered: Vec<usize>,
    rejected: Vec<usize>,
}

impl Aggregator {
    pub fn new(config: &SimConfig, method: Method) -> Self {
        let p = config.p;
        Self {
            method,
            truth: config.beta.clone(),
            alpha: 1.0 - config.pipeline.level,
            n_replicates: 0,
            n_empty: 0,
            total_selected: 0,
            selected: vec![0; p],
            covered: vec![0; p],
            rejected: vec![0; p],
        }
    }

    /// Records of other methods are ignored.
    pub fn push(&mut self, record: &ReplicateRecord) {
        if record.method != self.method {
            return;
        }
        self.n_replicates += 1;
        self.n_empty += usize::from(record.empty_selection);
        for c in record.coefs.iter().filter(|c| c.coef > 0) {
            let j = c.coef - 1;
            self.total_selected += 1;
            self.selected[j] += 1;
            self.covered[j] += usize::from(c.covers(self.truth[j]));
            self.rejected[j] += usize::from(c.p_value < self.alpha);
        }
    }

    pub fn finish(self) -> MethodAggregates {
        let coefs = (0..self.truth.len())
            .map(|j| {
                coef_aggregate(
                    j + 1,
                    self.truth[j],
                    self.n_replicates,
                    self.selected[j],
                    self.covered[j],
                    self.rejected[j],
                )
            })
            .collect();
        MethodAggregates {
            method: self.method,
            n_replicates: self.n_replicates,
            n_empty: self.n_empty,
            mean_selected: if self.n_replicates == 0 {
                0.0
            } else {
                self.total_selected as f64 / self.n_replicates as f64
            },
            coefs,
        }
    }
}

impl MethodAggregates {
    /// Batch recomputation, coefficient by coefficient.
    pub fn from_records(config: &SimConfig, method: Method, records: &[ReplicateRecord]) -> Self {
        let alpha = 1.0 - config.pipeline.level;
        let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
        let n_replicates = mine.len();
        let coefs = (1..=config.p)
            .map(|j| {
                let truth = config.beta[j - 1];
                let hits: Vec<&CoefRecord> = mine.iter().filter_map(|r| r.coefs.iter().find(|c| c.coef == j)).collect();
                let covered = hits.iter().filter(|c| c.covers(truth)).count();
                let rejected = hits.iter().filter(|c| c.p_value < alpha).count();
                coef_aggregate(j, truth, n_replicates, hits.len(), covered, rejected)
            })
            .collect::<Vec<_>>();
        let total: usize = mine.iter().map(|r| r.selected().len()).sum();
        MethodAggregates {
            method,
            n_replicates,
            n_empty: mine.iter().filter(|r| r.empty_selection).count(),
            mean_selected: if n_replicates == 0 {
                0.0
            } else {
                total as f64 / n_replicates as f64
            },
            coefs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    /// Sorted by replicate, then method.
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<FailureRecord>,
    pub aggregates: Vec<MethodAggregates>,
}

impl SimReport {
    pub fn aggregates_for(&self, method: Method) -> Option<&MethodAggregates> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    /// Slope p-values of every selected coefficient, in replicate order.
    /// Intercepts and empty selections contribute nothing.
    pub fn pooled_p_values(&self, method: Method) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method)
            .flat_map(|r| r.coefs.iter().filter(|c| c.coef > 0).map(|c| c.p_value))
            .collect()
    }

    /// Recomputes aggregates from the records and compares them with the
    /// stored ones.
    pub fn verify(&self) -> Result<()> {
        for stored in &self.aggregates {
            let fresh = MethodAggregates::from_records(&self.config, stored.method, &self.records);
            if &fresh != stored {
                return Err(Error::InconsistentReport(format!(
                    "aggregates for the {} method do not match the records",
                    stored.method.name()
                )));
            }
        }
        Ok(())
    }
}

/// Sorted empirical values paired with plotting positions `(k − 0.5)/m`,
/// as `(theoretical, empirical)`.
pub fn qq_data(pool: &[f64]) -> Result<Vec<(f64, f64)>> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("empty p-value pool".into()));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, v)| ((k as f64 + 0.5) / m, v))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Coefficient label, or `None` for the row averaging the null slopes.
    pub coef: Option<usize>,
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    pub selection: f64,
    pub selection_se: f64,
    pub rejection: Option<f64>,
    pub rejection_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub method: Method,
    pub rows: Vec<SummaryRow>,
}

/// One row per nonzero true slope, then one row for all null slopes: its
/// selection is the mean selection proportion, and coverage and rejection
/// pool the counts of every selected null slope.
pub fn summary_table(report: &SimReport, method: Method) -> Result<SummaryTable> {
    let agg = report
        .aggregates_for(method)
        .ok_or_else(|| Error::InvalidArgument(format!("report has no {} results", method.name())))?;
    let mut rows: Vec<SummaryRow> = agg
        .coefs
        .iter()
        .filter(|c| c.truth != 0.0)
        .map(|c| SummaryRow {
            coef: Some(c.coef),
            coverage: c.coverage,
            coverage_se: c.coverage_se,
            selection: c.selection,
            selection_se: c.selection_se,
            rejection: c.rejection,
            rejection_se: c.rejection_se,
        })
        .collect();
    let nulls: Vec<&CoefAggregate> = agg.coefs.iter().filter(|c| c.truth == 0.0).collect();
    if !nulls.is_empty() {
        let sel: usize = nulls.iter().map(|c| c.n_selected).sum();
        let cov: usize = nulls.iter().map(|c| c.n_covered).sum();
        let rej: usize = nulls.iter().map(|c| c.n_rejected).sum();
        let trials = nulls.len() * agg.n_replicates;
        let pooled = coef_aggregate(0, 0.0, trials, sel, cov, rej);
        rows.push(SummaryRow {
            coef: None,
            coverage: pooled.coverage,
            coverage_se: pooled.coverage_se,
            selection: pooled.selection,
            selection_se: pooled.selection_se,
            rejection: pooled.rejection,
            rejection_se: pooled.rejection_se,
        });
    }
    Ok(SummaryTable { method, rows })
}
