//! Command-line front end: `portdim <subcommand> [options]`.
//!
//! Settings come from built-in defaults, then `--config <file.json>`, then
//! the flags given on the command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use portdim::bbsolve::BoundMode;
use portdim::divmeasure::NuMeasure;
use portdim::harness::{
    self, write_json, write_moments, write_returns_csv, write_tidy_csv, write_trace_csv, CorrelationSpec,
    ExperimentConfig, Provenance, ReferenceSpec, ResultFile, RunRecord, ToySolver,
};
use portdim::retsim::{MarginSpec, MarginTarget};

#[derive(Parser)]
#[command(name = "portdim", version, about = "Portfolio dimensionality and global kurtosis minimization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Number of simulated observations.
    #[arg(long, short = 't', global = true)]
    sample_size: Option<usize>,
    #[arg(long, short = 'n', global = true)]
    n_assets: Option<usize>,
    /// Homogeneous target correlation.
    #[arg(long, global = true, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Marginal kurtosis of symmetric unit-variance NIG margins.
    #[arg(long, global = true)]
    kurtosis: Option<f64>,
    /// Returns CSV to use instead of simulating.
    #[arg(long, global = true)]
    returns: Option<PathBuf>,
    /// Co-moments JSON to use instead of returns.
    #[arg(long, global = true)]
    moments: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate meta-Gaussian returns and write them as CSV.
    Simulate,
    /// Estimate co-moments from returns and write them as JSON.
    BuildMoments,
    /// Third-asset weights of min-kurtosis, risk parity and max diversification portfolios.
    ToyExample {
        /// Comma-separated correlations in (-1, 1).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho_grid: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
    },
    /// Minimum-kurtosis portfolio by branch and bound.
    OptimizeBb {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        n_c: Option<usize>,
        #[arg(long)]
        rho_tol: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        max_seconds: Option<f64>,
    },
    /// Minimum-kurtosis portfolio by multistart projected Langevin dynamics.
    OptimizeGld {
        #[arg(long)]
        lambda: Option<f64>,
        /// Temperature scale.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        n_sim: Option<usize>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        no_polish: bool,
    },
    /// Diversification measure and dimensionality of a portfolio.
    Dimensionality {
        /// Weights: JSON array, results JSON, or comma-separated numbers.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        measure: Option<MeasureArg>,
        /// Reference asset given by its value of nu.
        #[arg(long)]
        reference_nu: Option<f64>,
        /// Reference NIG asset with this kurtosis (symmetric, unit variance).
        #[arg(long)]
        reference_kurtosis: Option<f64>,
    },
    /// Time simulation, co-moment estimation and both optimizers.
    Bench,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Bb,
    Gld,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Lp1,
    Lp2,
    Milp,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    ExcessKurtosis,
    SquaredSkewness,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = c.sample_size {
        cfg.sample_size = t;
    }
    if let Some(n) = c.n_assets {
        cfg.universe.n_assets = n;
    }
    if let Some(r) = c.rho {
        cfg.universe.correlation = CorrelationSpec::Homogeneous { rho: r };
    }
    if let Some(k) = c.kurtosis {
        cfg.universe.margin = MarginSpec::Moments(MarginTarget::symmetric(k));
        cfg.universe.margins = None;
    }
    if c.returns.is_some() {
        cfg.returns_file = c.returns.clone();
    }
    if c.moments.is_some() {
        cfg.moments_file = c.moments.clone();
    }
    Ok(cfg)
}

fn apply_command(cfg: &mut ExperimentConfig, cmd: &Command) {
    match cmd {
        Command::Simulate => cfg.experiment = "simulate".into(),
        Command::BuildMoments => cfg.experiment = "build-moments".into(),
        Command::ToyExample { rho_grid, solver } => {
            cfg.experiment = "toy-example".into();
            if let Some(g) = rho_grid {
                cfg.toy.rho_grid = g.clone();
            }
            if let Some(s) = solver {
                cfg.toy.solver = match s {
                    SolverArg::Bb => ToySolver::Bb,
                    SolverArg::Gld => ToySolver::Gld,
                };
            }
        }
        Command::OptimizeBb { mode, n_c, rho_tol, max_iterations, max_seconds } => {
            cfg.experiment = "optimize-bb".into();
            if let Some(m) = mode {
                cfg.bb.bound_mode = match m {
                    ModeArg::Lp1 => BoundMode::Lp1,
                    ModeArg::Lp2 => BoundMode::Lp2,
                    ModeArg::Milp => BoundMode::Milp,
                };
            }
            if let Some(v) = n_c {
                cfg.bb.n_c = *v;
            }
            if let Some(v) = rho_tol {
                cfg.bb.rho_tol = *v;
            }
            if let Some(v) = max_iterations {
                cfg.bb.max_iterations = *v;
            }
            if max_seconds.is_some() {
                cfg.bb.max_seconds = *max_seconds;
            }
        }
        Command::OptimizeGld { lambda, c, n_sim, n_iter, no_polish } => {
            cfg.experiment = "optimize-gld".into();
            if let Some(v) = lambda {
                cfg.gld.lambda = *v;
            }
            if let Some(v) = c {
                cfg.gld.c = *v;
            }
            if let Some(v) = n_sim {
                cfg.gld.n_sim = *v;
            }
            if let Some(v) = n_iter {
                cfg.gld.n_iter = *v;
            }
            if *no_polish {
                cfg.gld.polish = false;
            }
        }
        Command::Dimensionality { weights, measure, reference_nu, reference_kurtosis } => {
            cfg.experiment = "dimensionality".into();
            if weights.is_some() {
                cfg.dimensionality.weights_file = weights.clone();
            }
            if let Some(m) = measure {
                cfg.dimensionality.measure = match m {
                    MeasureArg::ExcessKurtosis => NuMeasure::ExcessKurtosis,
                    MeasureArg::SquaredSkewness => NuMeasure::SquaredSkewness,
                };
            }
            if let Some(v) = reference_nu {
                cfg.dimensionality.reference = ReferenceSpec::Nu { value: *v };
            }
            if let Some(k) = reference_kurtosis {
                cfg.dimensionality.reference = ReferenceSpec::Moments(MarginTarget::symmetric(*k));
            }
        }
        Command::Bench => cfg.experiment = "bench".into(),
    }
}

fn finish<T: serde::Serialize>(cfg: &ExperimentConfig, started: Instant, result: &T) -> Result<()> {
    let record = RunRecord::new(&cfg.experiment, cfg, started.elapsed().as_secs_f64(), result)?;
    write_json(&cfg.output_dir.join("run.json"), &record)?;
    Ok(())
}

fn write_result<T: serde::Serialize>(cfg: &ExperimentConfig, prov: &Provenance, result: &T) -> Result<PathBuf> {
    let path = cfg.output_dir.join("result.json");
    write_json(&path, &ResultFile::new(&cfg.experiment, prov, result))?;
    Ok(path)
}

fn f(x: f64) -> String {
    x.to_string()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    apply_command(&mut cfg, &cli.command);
    cfg.validate()?;
    let prov = cfg.provenance();
    let out: &Path = &cfg.output_dir;
    let started = Instant::now();
    match &cli.command {
        Command::Simulate => {
            let sample = harness::simulate(&cfg)?;
            let path = out.join("returns.csv");
            write_returns_csv(&path, &sample, &prov)?;
            finish(&cfg, started, &serde_json::json!({ "returns": path, "rows": sample.n_obs() }))?;
            println!("wrote {} ({} rows)", path.display(), sample.n_obs());
        }
        Command::BuildMoments => {
            let (c, names) = harness::load_comoments(&cfg)?;
            let path = out.join("moments.json");
            write_moments(&path, &c, names, &prov)?;
            finish(&cfg, started, &serde_json::json!({ "moments": path, "n_obs": c.n_obs() }))?;
            println!("wrote {}", path.display());
        }
        Command::ToyExample { .. } => {
            let rows = harness::toy_example(&cfg)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        f(r.rho),
                        f(r.w3_min_kurtosis),
                        f(r.w3_risk_parity),
                        f(r.w3_diversification_ratio),
                        f(r.min_kurtosis),
                    ]
                })
                .collect();
            write_tidy_csv(
                &out.join("toy.csv"),
                &prov,
                &["rho", "w3_min_kurtosis", "w3_risk_parity", "w3_diversification_ratio", "min_kurtosis"],
                &table,
            )?;
            write_result(&cfg, &prov, &rows)?;
            finish(&cfg, started, &rows)?;
            for r in &rows {
                println!(
                    "rho {:>6}: w3 min-kurtosis {:.4}  risk parity {:.4}  diversification ratio {:.4}",
                    r.rho, r.w3_min_kurtosis, r.w3_risk_parity, r.w3_diversification_ratio
                );
            }
        }
        Command::OptimizeBb { .. } => {
            let (c, _) = harness::load_comoments(&cfg)?;
            let r = harness::optimize_bb(&c, &cfg)?;
            write_trace_csv(&out.join("trace.csv"), &prov, &r.lb_history, &r.ub_history, &r.deleted_fraction)?;
            write_result(&cfg, &prov, &r)?;
            finish(&cfg, started, &serde_json::json!({ "kurtosis": r.kurtosis, "iterations": r.iterations, "status": r.status }))?;
            println!(
                "status {:?}, {} iterations, kurtosis {:.6}, weights {:?}",
                r.status,
                r.iterations,
                r.kurtosis,
                r.incumbent.as_slice()
            );
        }
        Command::OptimizeGld { .. } => {
            let (c, names) = harness::load_comoments(&cfg)?;
            let r = harness::optimize_gld(&c, &cfg)?;
            let best: Vec<Vec<String>> = r
                .path_best
                .iter()
                .enumerate()
                .map(|(p, v)| vec![p.to_string(), f(*v)])
                .collect();
            write_tidy_csv(&out.join("path_best.csv"), &prov, &["path", "best_kurtosis"], &best)?;
            let mut traces = Vec::new();
            for t in &r.traces {
                for (k, w) in t.iterations.iter().zip(&t.weights) {
                    for (a, x) in w.iter().enumerate() {
                        traces.push(vec![t.path.to_string(), k.to_string(), names[a].clone(), f(*x)]);
                    }
                }
            }
            write_tidy_csv(&out.join("traces.csv"), &prov, &["path", "iteration", "asset", "weight"], &traces)?;
            let bins = portdim::gld::HISTOGRAM_BINS;
            let mut hist = Vec::new();
            for (a, h) in r.final_histograms.iter().enumerate() {
                for (b, count) in h.iter().enumerate() {
                    hist.push(vec![names[a].clone(), f(b as f64 / bins as f64), f((b + 1) as f64 / bins as f64), count.to_string()]);
                }
            }
            write_tidy_csv(&out.join("histograms.csv"), &prov, &["asset", "bin_lo", "bin_hi", "count"], &hist)?;
            write_result(&cfg, &prov, &r)?;
            finish(&cfg, started, &serde_json::json!({ "kurtosis": r.best_kurtosis, "evaluations": r.evaluations }))?;
            println!("kurtosis {:.6}, weights {:?}", r.best_kurtosis, r.best_weights.as_slice());
        }
        Command::Dimensionality { .. } => {
            let Some(wf) = &cfg.dimensionality.weights_file else {
                bail!("dimensionality needs --weights or dimensionality.weights_file in the config");
            };
            let w = harness::read_weights(wf)?;
            let (c, _) = harness::load_comoments(&cfg)?;
            let rep = harness::dimensionality_report(&w, &c, &cfg.dimensionality)?;
            write_result(&cfg, &prov, &rep)?;
            finish(&cfg, started, &rep)?;
            println!(
                "nu {:.6} (reference {:.6}), D = {:.4}, d = {:.4} [{:?}]",
                rep.nu_portfolio, rep.nu_reference, rep.diversification, rep.dimensionality, rep.quality
            );
        }
        Command::Bench => {
            let rep = harness::bench(&cfg)?;
            write_json(&out.join("bench.json"), &rep)?;
            finish(&cfg, started, &rep)?;
            println!("{}", serde_json::to_string_pretty(&rep)?);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
