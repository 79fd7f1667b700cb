use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fission_core::dist::{DistributionSpec, Family};
use fission_core::fission::{fission_poisson_thin, FissionRule, RuleKind};
use fission_core::glm::SelectionRule;
use fission_core::info::{calibrate_equal_training_info, chain_rule_check, inverse_info_inequality_check};
use fission_core::rng;
use fission_core::sim::{run_study, save_report, summary_table, Design, MethodChoice, SimConfig};
use fission_core::Error;

#[derive(Parser)]
#[command(name = "fission", version, about = "Data fission operators, information audits and selective-inference simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw X from a distribution and split each draw with a fission rule.
    Sample(SampleArgs),
    /// Compare Poisson thinning with the calibrated additive-noise rule.
    InfoAudit(AuditArgs),
    /// Run the logistic-regression select-then-infer simulation study.
    Simulate(SimulateArgs),
}

#[derive(clap::Args)]
struct SampleArgs {
    /// gaussian-p1, gaussian-misspec-p2, poisson-thin-p1, poisson-tau-p2,
    /// negbin-p1, negbin-via-poisson-p2 or bernoulli-p2.
    #[arg(long)]
    rule: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma_tilde_sq: Option<f64>,
    /// Known negative binomial size; defaults to the one in --dist.
    #[arg(long)]
    r: Option<f64>,
    /// Comma-separated thinning probabilities for K folds.
    #[arg(long, value_delimiter = ',')]
    k_vector: Option<Vec<f64>>,
    /// family:params, e.g. poisson:2, negbin:3,0.5, gaussian:0,1, bernoulli:0.3.
    #[arg(long)]
    dist: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct AuditArgs {
    #[arg(long, default_value = "poisson")]
    family: String,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 100_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    GlobalNull,
    Signal,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Flawed,
    Corrected,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Min,
    #[value(name = "1se")]
    OneSe,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "global-null")]
    scenario: Scenario,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodArg,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    p: usize,
    #[arg(long, default_value_t = 0.8)]
    eps: f64,
    #[arg(long, default_value_t = 300)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "FISSION_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    beta0: f64,
    /// Nonzero slopes as j=v pairs with 1-based j, e.g. 1=-0.9,2=2.1.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<String>,
    /// Covariates: std-normal or ar1:<rho>.
    #[arg(long, default_value = "std-normal")]
    design: String,
    /// Penalty selection rule for cross-validation.
    #[arg(long, value_enum, default_value = "min")]
    cv_rule: RuleArg,
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    #[arg(long, default_value_t = 100)]
    n_lambda: usize,
    #[arg(long, default_value_t = 0.01)]
    lambda_min_ratio: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0.01)]
    max_failure_rate: f64,
}

fn parse_dist(text: &str) -> Result<DistributionSpec> {
    let (family, params) = text
        .split_once(':')
        .with_context(|| format!("--dist {text:?} is not of the form family:params"))?;
    let params: Vec<f64> = params
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad parameters in --dist {text:?}"))?;
    let family = match family.to_ascii_lowercase().as_str() {
        "bernoulli" => Family::Bernoulli,
        "binomial" => Family::Binomial,
        "poisson" => Family::Poisson,
        "negbin" => Family::NegBin,
        "gaussian" => Family::Gaussian,
        other => bail!("unsupported family {other:?} for sampling"),
    };
    Ok(DistributionSpec::new(family, params)?)
}

fn need(value: Option<f64>, flag: &str, rule: &str) -> Result<f64> {
    value.with_context(|| format!("rule {rule} requires --{flag}"))
}

fn build_rule(args: &SampleArgs, truth: &DistributionSpec) -> Result<FissionRule> {
    let kind = RuleKind::from_cli_name(&args.rule).with_context(|| format!("unknown rule {:?}", args.rule))?;
    let name = args.rule.as_str();
    let rule = match kind {
        RuleKind::GaussianP1 => FissionRule::gaussian_p1(need(args.eps, "eps", name)?, truth.param(1))?,
        RuleKind::GaussianMisspecP2 => FissionRule::gaussian_misspec_p2(
            need(args.eps, "eps", name)?,
            need(args.sigma_tilde_sq, "sigma-tilde-sq", name)?,
        )?,
        RuleKind::PoissonThinP1 => match &args.k_vector {
            Some(k) => FissionRule::poisson_thin_k(k.clone())?,
            None => FissionRule::poisson_thin(need(args.eps, "eps", name)?)?,
        },
        RuleKind::PoissonTauP2 => FissionRule::poisson_tau_p2(need(args.tau, "tau", name)?)?,
        RuleKind::NegBinP1 => {
            let r = args.r.unwrap_or_else(|| truth.param(0));
            FissionRule::negbin_p1(need(args.eps, "eps", name)?, r)?
        }
        RuleKind::NegBinViaPoissonP2 => FissionRule::negbin_via_poisson_p2(need(args.eps, "eps", name)?)?,
        RuleKind::BernoulliP2 => FissionRule::bernoulli_p2(need(args.eps, "eps", name)?)?,
    };
    if rule.family() != truth.family() {
        bail!("rule {name} applies to {} data, not {}", rule.family(), truth.family());
    }
    Ok(rule)
}

fn sample(args: SampleArgs) -> Result<()> {
    let truth = parse_dist(&args.dist)?;
    let rule = build_rule(&args, &truth)?;
    let mut rng = rng::master(args.seed);
    let xs = truth.sample(&mut rng, args.n)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&args.out)?));
    match &rule {
        FissionRule::PoissonThinP1 { eps } if eps.len() > 2 => {
            let mut header = vec!["x".to_string()];
            header.extend((1..=eps.len()).map(|k| format!("fold_{k}")));
            w.write_record(&header)?;
            for x in xs {
                let set = fission_poisson_thin(x as u64, eps, &mut rng)?;
                let mut row = vec![x.to_string()];
                row.extend(set.folds.iter().map(u64::to_string));
                w.write_record(&row)?;
            }
        }
        _ => {
            w.write_record(["x", "fold1", "fold2"])?;
            for x in xs {
                let pair = rule.split(x, &mut rng)?;
                w.write_record([x.to_string(), pair.fold1.to_string(), pair.fold2.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn info_audit(args: AuditArgs) -> Result<()> {
    if args.family != "poisson" {
        bail!("info-audit supports --family poisson only");
    }
    let truth = DistributionSpec::poisson(args.theta)?;
    let p1 = FissionRule::poisson_thin(args.eps)?;
    let tau = calibrate_equal_training_info(&p1, &truth)?;
    let p2 = FissionRule::poisson_tau_p2(tau)?;
    let mut rng = rng::master(args.seed);
    let p1_report = chain_rule_check(&p1, &truth, args.n_mc, &mut rng)?;
    let p2_report = chain_rule_check(&p2, &truth, args.n_mc, &mut rng)?;
    let inequality = inverse_info_inequality_check(&p1, &p2, &truth, args.n_mc, &mut rng)?;
    let out = serde_json::json!({
        "truth": truth,
        "tau": tau,
        "p1": p1_report,
        "p2": p2_report,
        "inequality": inequality,
    });
    serde_json::to_writer_pretty(BufWriter::new(File::create(&args.out)?), &out)?;
    Ok(())
}

fn parse_design(text: &str) -> Result<Design> {
    if text == "std-normal" {
        return Ok(Design::StdNormal);
    }
    if let Some(rho) = text.strip_prefix("ar1:") {
        return Ok(Design::Ar1 {
            rho: rho.parse().with_context(|| format!("bad AR(1) correlation {rho:?}"))?,
        });
    }
    bail!("unknown design {text:?}; expected std-normal or ar1:<rho>")
}

fn build_config(args: &SimulateArgs) -> Result<SimConfig> {
    let mut cfg = SimConfig::global_null(args.reps, args.seed);
    cfg.n = args.n;
    cfg.p = args.p;
    cfg.beta = vec![0.0; args.p];
    cfg.beta0 = args.beta0;
    cfg.eps = args.eps;
    match args.scenario {
        Scenario::GlobalNull => {
            if !args.beta.is_empty() {
                bail!("--beta applies to the custom scenario only");
            }
        }
        Scenario::Signal => {
            if !args.beta.is_empty() {
                bail!("--beta applies to the custom scenario only");
            }
            if args.p < 3 {
                bail!("the signal scenario needs p ≥ 3");
            }
            cfg.beta[..3].copy_from_slice(&SimConfig::signal(1, 0).beta[..3]);
        }
        Scenario::Custom => {
            for pair in &args.beta {
                let (j, v) = pair
                    .split_once('=')
                    .with_context(|| format!("--beta entry {pair:?} is not j=v"))?;
                let j: usize = j.trim().parse().with_context(|| format!("bad index in {pair:?}"))?;
                let v: f64 = v.trim().parse().with_context(|| format!("bad value in {pair:?}"))?;
                if j == 0 || j > args.p {
                    bail!("--beta index {j} outside 1..={}", args.p);
                }
                cfg.beta[j - 1] = v;
            }
        }
    }
    cfg.method = match args.method {
        MethodArg::Flawed => MethodChoice::FlawedMarginal,
        MethodArg::Corrected => MethodChoice::CorrectedOffset,
        MethodArg::Both => MethodChoice::Both,
    };
    cfg.design = parse_design(&args.design)?;
    cfg.threads = args.threads;
    cfg.max_failure_rate = args.max_failure_rate;
    cfg.pipeline.level = args.level;
    cfg.pipeline.cv.n_folds = args.cv_folds;
    cfg.pipeline.cv.n_lambda = args.n_lambda;
    cfg.pipeline.cv.lambda_min_ratio = args.lambda_min_ratio;
    cfg.pipeline.cv.rule = match args.cv_rule {
        RuleArg::Min => SelectionRule::Min,
        RuleArg::OneSe => SelectionRule::OneSe,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.3}"))
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let cfg = build_config(&args)?;
    let report = match run_study(&cfg) {
        Ok(r) => r,
        Err(e @ Error::StudyAborted { .. }) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    save_report(&report, &args.out_dir)?;
    for method in cfg.method.methods() {
        let agg = report.aggregates_for(method).expect("requested method");
        let pool = report.pooled_p_values(method);
        println!(
            "{}: {} replicates, {} empty selections, mean |S| = {:.3}, {} pooled p-values",
            method.name(),
            agg.n_replicates,
            agg.n_empty,
            agg.mean_selected,
            pool.len()
        );
        if let Ok(ks) = fission_core::stats::ks_uniform(&pool) {
            println!("  KS vs uniform: D = {:.4}, p = {:.3e}", ks.statistic, ks.p_value);
        }
        let table = summary_table(&report, method)?;
        println!("  {:>6} {:>10} {:>10} {:>10}", "coef", "coverage", "selected", "rejected");
        for row in table.rows {
            let label = row.coef.map_or_else(|| "null".to_string(), |j| j.to_string());
            println!(
                "  {:>6} {:>10} {:>10.3} {:>10}",
                label,
                fmt_opt(row.coverage),
                row.selection,
                fmt_opt(row.rejection)
            );
        }
    }
    if !report.failures.is_empty() {
        eprintln!("{} replicate(s) failed within the error budget", report.failures.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sample(a) => sample(a).map(|()| ExitCode::SUCCESS),
        Command::InfoAudit(a) => info_audit(a).map(|()| ExitCode::SUCCESS),
        Command::Simulate(a) => simulate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
