//! On-disk layout of a report directory:
//!
//! - `records.csv`: one row per (replicate, method, coefficient).
//! - `aggregates.json`: configuration, failures and aggregates.
//! - `qq_<method>.csv`: `theoretical,empirical` pairs of the pooled slope
//!   p-values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{qq_data, CoefRecord, FailureRecord, MethodAggregates, ReplicateRecord, SimReport};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::selective::Method;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    replicate: u64,
    method: String,
    lambda: f64,
    empty_selection: bool,
    coef: usize,
    estimate: f64,
    se: f64,
    ci_lower: f64,
    ci_upper: f64,
    p_value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    config: SimConfig,
    failures: Vec<FailureRecord>,
    aggregates: Vec<MethodAggregates>,
}

pub fn write_records_csv<W: Write>(records: &[ReplicateRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        for c in &r.coefs {
            w.serialize(Row {
                replicate: r.replicate,
                method: r.method.name().to_string(),
                lambda: r.lambda,
                empty_selection: r.empty_selection,
                coef: c.coef,
                estimate: c.estimate,
                se: c.se,
                ci_lower: c.ci_lower,
                ci_upper: c.ci_upper,
                p_value: c.p_value,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_records_csv`]; consecutive rows with the same
/// replicate and method form one record.
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ReplicateRecord>> {
    let mut records: Vec<ReplicateRecord> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: Row = row?;
        let method = Method::from_name(&row.method)
            .ok_or_else(|| Error::InconsistentReport(format!("unknown method {:?}", row.method)))?;
        let coef = CoefRecord {
            coef: row.coef,
            estimate: row.estimate,
            se: row.se,
            ci_lower: row.ci_lower,
            ci_upper: row.ci_upper,
            p_value: row.p_value,
        };
        match records.last_mut() {
            Some(last) if last.replicate == row.replicate && last.method == method && row.coef != 0 => {
                last.coefs.push(coef);
            }
            _ => {
                if row.coef != 0 {
                    return Err(Error::InconsistentReport(format!(
                        "replicate {} starts without an intercept row",
                        row.replicate
                    )));
                }
                records.push(ReplicateRecord {
                    replicate: row.replicate,
                    method,
                    lambda: row.lambda,
                    empty_selection: row.empty_selection,
                    coefs: vec![coef],
                });
            }
        }
    }
    Ok(records)
}

pub fn write_qq_csv<W: Write>(pairs: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theoretical", "empirical"])?;
    for (t, e) in pairs {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the report directory, creating it if needed. Methods with an
/// empty p-value pool get no QQ file.
pub fn save_report(report: &SimReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_records_csv(&report.records, BufWriter::new(File::create(dir.join("records.csv"))?))?;
    let summary = Summary {
        config: report.config.clone(),
        failures: report.failures.clone(),
        aggregates: report.aggregates.clone(),
    };
    let mut json = BufWriter::new(File::create(dir.join("aggregates.json"))?);
    serde_json::to_writer_pretty(&mut json, &summary)?;
    json.flush()?;
    for agg in &report.aggregates {
        let pool = report.pooled_p_values(agg.method);
        if pool.is_empty() {
            continue;
        }
        let path = dir.join(format!("qq_{}.csv", agg.method.name()));
        write_qq_csv(&qq_data(&pool)?, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

/// Reads a report directory and checks its aggregates against its records.
pub fn load_report(dir: &Path) -> Result<SimReport> {
    let summary: Summary = serde_json::from_reader(BufReader::new(File::open(dir.join("aggregates.json"))?))?;
    let records = read_records_csv(BufReader::new(File::open(dir.join("records.csv"))?))?;
    let report = SimReport {
        config: summary.config,
        records,
        failures: summary.failures,
        aggregates: summary.aggregates,
    };
    report.verify()?;
    Ok(report)
}
