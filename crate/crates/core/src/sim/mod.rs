//! Seeded, parallel replication of the select-then-infer pipelines.
//!
//! Replicate `id` draws everything (design, response, folds, CV folds)
//! from [`rng::child`]`(seed, id)`, so its record depends only on the
//! master seed and the id. Aggregation folds records in id order.

mod io;
mod report;

pub use io::{load_report, read_records_csv, save_report, write_qq_csv, write_records_csv};
pub use report::{
    qq_data, summary_table, Aggregator, CoefAggregate, CoefRecord, FailureRecord, MethodAggregates,
    ReplicateRecord, SimReport, SummaryTable, SummaryRow,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{sigmoid, Dataset};
use crate::rng;
use crate::selective::{finish_pipeline, split_and_select, Method, PipelineOptions, PipelineResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    FlawedMarginal,
    CorrectedOffset,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            Self::FlawedMarginal => vec![Method::FlawedMarginal],
            Self::CorrectedOffset => vec![Method::CorrectedOffset],
            Self::Both => vec![Method::FlawedMarginal, Method::CorrectedOffset],
        }
    }
}

/// Covariate generator; rows are redrawn per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// iid N(0, 1) entries.
    StdNormal,
    /// Stationary Gaussian AR(1) across columns: unit variances and
    /// `corr(x_j, x_k) = rho^|j−k|`.
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub eps: f64,
    pub n_reps: usize,
    pub method: MethodChoice,
    pub seed: u64,
    pub design: Design,
    pub pipeline: PipelineOptions,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Largest tolerated fraction of failed replicates.
    pub max_failure_rate: f64,
}

impl SimConfig {
    /// `n = 500`, `p = 50`, `β₀ = 0.6`, every slope zero, `ε = 0.8`.
    pub fn global_null(n_reps: usize, seed: u64) -> Self {
        Self {
            n: 500,
            p: 50,
            beta0: 0.6,
            beta: vec![0.0; 50],
            eps: 0.8,
            n_reps,
            method: MethodChoice::Both,
            seed,
            design: Design::StdNormal,
            pipeline: PipelineOptions::default(),
            threads: None,
            max_failure_rate: 0.01,
        }
    }

    /// As [`SimConfig::global_null`] with `β₁ = −0.9`, `β₂ = 2.1`, `β₃ = −1.5`.
    pub fn signal(n_reps: usize, seed: u64) -> Self {
        let mut cfg = Self::global_null(n_reps, seed);
        cfg.beta[..3].copy_from_slice(&[-0.9, 2.1, -1.5]);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::InvalidArgument("n_reps must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!("ε = {} must lie in (0, 1)", self.eps)));
        }
        if self.beta.len() != self.p {
            return Err(Error::InvalidArgument(format!(
                "beta has length {} but p = {}",
                self.beta.len(),
                self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("n must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.max_failure_rate) {
            return Err(Error::InvalidArgument("max_failure_rate must lie in [0, 1)".into()));
        }
        if let Design::Ar1 { rho } = self.design {
            if !(rho > -1.0 && rho < 1.0) {
                return Err(Error::InvalidArgument(format!("AR(1) correlation {rho} must lie in (-1, 1)")));
            }
        }
        if self.beta.iter().chain([&self.beta0]).any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Failed replicates tolerated before the study aborts.
    pub fn failure_budget(&self) -> usize {
        (self.max_failure_rate * self.n_reps as f64).floor() as usize
    }

    /// Draws the design and response of replicate `id` from its stream.
    pub fn draw_dataset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let mut x = DMatrix::from_fn(self.n, self.p, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Design::Ar1 { rho } = self.design {
            let innovation = (1.0 - rho * rho).sqrt();
            for i in 0..self.n {
                for j in 1..self.p {
                    x[(i, j)] = rho * x[(i, j - 1)] + innovation * x[(i, j)];
                }
            }
        }
        let y = (0..self.n)
            .map(|i| {
                let eta = self.beta0 + (0..self.p).map(|j| x[(i, j)] * self.beta[j]).sum::<f64>();
                f64::from(u8::from(rng.random::<f64>() < sigmoid(eta)))
            })
            .collect();
        Dataset::new(x, y, None)
    }
}

fn record_of(id: u64, result: &PipelineResult) -> ReplicateRecord {
    let mut coefs = vec![CoefRecord::new(0, result.intercept())];
    for (k, &j) in result.selected.selected.iter().enumerate() {
        coefs.push(CoefRecord::new(j + 1, &result.inference[k + 1]));
    }
    ReplicateRecord {
        replicate: id,
        method: result.method,
        lambda: result.selected.lambda_chosen,
        empty_selection: result.empty_selection,
        coefs,
    }
}

/// Records of one replicate, one per method, sharing the split and
/// selection.
pub fn run_replicate(config: &SimConfig, id: u64) -> Result<Vec<ReplicateRecord>> {
    let mut rng = rng::child(config.seed, id);
    let data = config.draw_dataset(&mut rng)?;
    let split = split_and_select(&data, config.eps, &config.pipeline, &mut rng)?;
    config
        .method
        .methods()
        .into_iter()
        .map(|m| finish_pipeline(&data, &split, m, config.pipeline.level).map(|r| record_of(id, &r)))
        .collect()
}

/// Runs every replicate; fails with [`Error::StudyAborted`] when more than
/// [`SimConfig::failure_budget`] replicates error.
pub fn run_study(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let run = || -> Vec<Result<Vec<ReplicateRecord>>> {
        (0..config.n_reps as u64)
            .into_par_iter()
            .map(|id| run_replicate(config, id))
            .collect()
    };
    let outcomes = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut aggs: Vec<Aggregator> = config.method.methods().into_iter().map(|m| Aggregator::new(config, m)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(recs) => {
                for (agg, rec) in aggs.iter_mut().zip(&recs) {
                    agg.push(rec);
                }
                records.extend(recs);
            }
            Err(e) => failures.push(FailureRecord {
                replicate: id as u64,
                message: e.to_string(),
            }),
        }
    }
    let budget = config.failure_budget();
    if failures.len() > budget {
        return Err(Error::StudyAborted {
            failed: failures.len(),
            total: config.n_reps,
            budget,
        });
    }
    Ok(SimReport {
        config: config.clone(),
        records,
        failures,
        aggregates: aggs.into_iter().map(Aggregator::finish).collect(),
    })
}
