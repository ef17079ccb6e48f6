//! `cb2o`: runs CB2O experiments, baseline comparisons, ablation grids and
//! diagnostics from JSON configuration files.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a simulation
//! fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cb2o::harness::analyze::{
    analyze_decay, instability_sweep, laplace_trend, DecayConfig, LaplaceTrendConfig,
};
use cb2o::harness::config::{from_value, load_value};
use cb2o::harness::output::{fmt_f64, to_json_string, write_csv, write_json};
use cb2o::harness::{
    apply_override, compare_baselines, format_table, presets, run_ablation, run_experiment,
    write_artifacts, AblationGrid, CompareMode, CompareOptions, ExperimentConfig,
    ExperimentOutcome, Solver,
};
use cb2o::{Cb2oParams, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(
    name = "cb2o",
    version,
    about = "Consensus-based bi-level optimization experiments"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one multi-seed experiment described by a config file.
    Run(RunArgs),
    /// Compare CB2O with the CBO baselines on a preset line-up.
    Compare(CompareArgs),
    /// Run an ablation grid from a config file or a shipped panel.
    Ablate(AblateArgs),
    /// Diagnostics: decay rate, Wasserstein instability, Laplace trends.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Short CB2O run on the Himmelblau demo problem.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TraceArg {
    Summary,
    Full,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON experiment config; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.beta=0.1` (repeatable, applied in order).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Number of seeds (replicates).
    #[arg(long, value_name = "N")]
    seeds: Option<usize>,
    /// Base seed; replicate r uses BASE + r.
    #[arg(long, value_name = "BASE")]
    seed: Option<u64>,
    /// Worker threads for the replicates (default: all cores).
    #[arg(long, value_name = "W")]
    workers: Option<usize>,
    /// Output directory for summary.json, per_seed.csv and timing files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// `full` also writes trace_<seed>.csv for every replicate.
    #[arg(long, value_enum, value_name = "LEVEL")]
    trace: Option<TraceArg>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Registered benchmark: ackley-circle or ackley-star.
    benchmark: String,
    /// Particle budget of the line-up.
    #[arg(long, value_name = "MODE", default_value = "same-particles")]
    mode: CompareMode,
    /// Number of seeds per solver.
    #[arg(long, value_name = "N", default_value_t = 100)]
    seeds: usize,
    /// Base seed; replicate r uses BASE + r.
    #[arg(long, value_name = "BASE", default_value_t = 0)]
    seed: u64,
    /// Worker threads for the replicates (default: all cores).
    #[arg(long, value_name = "W")]
    workers: Option<usize>,
    /// Cap every solver at K iterations.
    #[arg(long, value_name = "K")]
    max_iters: Option<usize>,
    /// Output directory for compare.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// JSON ablation grid.
    #[arg(long, value_name = "PATH", conflicts_with = "panel")]
    config: Option<PathBuf>,
    /// Shipped panel: n, beta, joint_n_beta, alpha, eps_stop, beta_n500, beta_n2000.
    #[arg(long, value_name = "NAME")]
    panel: Option<String>,
    /// Override a grid key, e.g. `--set reference.max_iters=5000` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Number of seeds per cell.
    #[arg(long, value_name = "N")]
    seeds: Option<usize>,
    /// Base seed; replicate r uses BASE + r.
    #[arg(long, value_name = "BASE")]
    seed: Option<u64>,
    /// Worker threads for the replicates (default: all cores).
    #[arg(long, value_name = "W")]
    workers: Option<usize>,
    /// Output directory for ablation.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Fit the variance decay rate on the quadratic test problem.
    Decay(AnalyzeArgs),
    /// Consensus gap against Wasserstein distance over a shift sweep.
    Instability(InstabilityArgs),
    /// Consensus trends in alpha and beta on the Himmelblau demo.
    LaplaceTrend(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// JSON config; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed of the random ensemble.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Output directory for the result files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InstabilityArgs {
    /// Comma-separated shifts of the outer half circle.
    #[arg(long = "s", value_name = "LIST", value_delimiter = ',', default_values_t = [0.1, 0.01, 0.001])]
    shifts: Vec<f64>,
    /// Weight parameter of the consensus.
    #[arg(long, default_value_t = 30.0)]
    alpha: f64,
    /// Quantile level; below 1/2 only the inner circle is selected.
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    /// Points per circle.
    #[arg(long, value_name = "M", default_value_t = 2000)]
    points: usize,
    /// Output directory for instability.csv.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// Number of seeds (replicates).
    #[arg(long, value_name = "N", default_value_t = 10)]
    seeds: usize,
    /// Base seed; replicate r uses BASE + r.
    #[arg(long, value_name = "BASE", default_value_t = 0)]
    seed: u64,
    /// Output directory for the experiment artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (_, 0) => log::LevelFilter::Warn,
        (_, 1) => log::LevelFilter::Info,
        (_, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Decay(a) => cmd_decay(a),
            AnalyzeCommand::Instability(a) => cmd_instability(a),
            AnalyzeCommand::LaplaceTrend(a) => cmd_laplace(a),
        },
        Command::Demo(a) => cmd_demo(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

type CmdResult = cb2o::Result<ExitCode>;

fn runtime_failure() -> ExitCode {
    ExitCode::from(3)
}

/// File (or `base`), then `--set`, then the dedicated flags, which win.
fn layered(
    path: Option<&Path>,
    base: Value,
    set: &[String],
    flags: &[(&str, Option<Value>)],
) -> cb2o::Result<Value> {
    let mut v = match path {
        Some(p) => load_value(p)?,
        None => base,
    };
    for o in set {
        apply_override(&mut v, o)?;
    }
    let root = v
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    for (key, val) in flags {
        if let Some(val) = val {
            root.insert(key.to_string(), val.clone());
        }
    }
    Ok(v)
}

fn path_value(p: &Option<PathBuf>) -> Option<Value> {
    p.as_ref().map(|p| Value::String(p.display().to_string()))
}

fn report_experiment(outcome: &ExperimentOutcome) -> CmdResult {
    let cfg = &outcome.config;
    let s = &outcome.summary;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        write_artifacts(dir, outcome)?;
        log::info!("artifacts written to {}", dir.display());
    }
    println!(
        "{} on {}: N = {}, mean precision {} over {}/{} seeds, mean runtime {:.3} s",
        cfg.method.label(),
        cfg.benchmark,
        cfg.solver.n_particles,
        fmt_f64(s.mean_precision),
        s.n_completed,
        s.n_seeds,
        s.mean_runtime_s
    );
    let mut failed = false;
    for r in outcome.failures() {
        failed = true;
        eprintln!(
            "seed {} failed: {}",
            r.seed,
            r.error.as_deref().unwrap_or("unknown error")
        );
    }
    Ok(if failed {
        runtime_failure()
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let trace = a.trace.map(|t| {
        Value::String(match t {
            TraceArg::Summary => "summary".into(),
            TraceArg::Full => "full".into(),
        })
    });
    let v = layered(
        a.config.as_deref(),
        Value::Object(Default::default()),
        &a.set,
        &[
            ("n_seeds", a.seeds.map(Value::from)),
            ("base_seed", a.seed.map(Value::from)),
            ("workers", a.workers.map(Value::from)),
            ("out", path_value(&a.out)),
            ("trace", trace),
        ],
    )?;
    let cfg: ExperimentConfig = from_value(v)?;
    let outcome = run_experiment(&cfg)?;
    report_experiment(&outcome)
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let opts = CompareOptions {
        n_seeds: a.seeds,
        base_seed: a.seed,
        workers: a.workers,
        max_iters: a.max_iters,
        init: None,
        out: a.out,
    };
    let rows = compare_baselines(&a.benchmark, a.mode, &opts)?;
    print!("{}", format_table(&rows));
    let mut failed = false;
    for r in &rows {
        if let Some(e) = &r.error {
            failed = true;
            eprintln!("{} failed: {e}", r.method);
        }
    }
    Ok(if failed {
        runtime_failure()
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_ablate(a: AblateArgs) -> CmdResult {
    let base = match (&a.config, &a.panel) {
        (None, Some(name)) => serde_json::to_value(presets::ablation(name)?)?,
        (None, None) => return Err(Error::Config("ablate needs --config or --panel".into())),
        (Some(_), _) => Value::Null,
    };
    let v = layered(
        a.config.as_deref(),
        base,
        &a.set,
        &[
            ("n_seeds", a.seeds.map(Value::from)),
            ("base_seed", a.seed.map(Value::from)),
            ("workers", a.workers.map(Value::from)),
            ("out", path_value(&a.out)),
        ],
    )?;
    let grid: AblationGrid = from_value(v)?;
    let rows = run_ablation(&grid)?;
    println!(
        "{:>14} {:>8} {:>12} {:>16} {:>14}",
        grid.axis.name(),
        "N",
        "beta",
        "precision",
        "runtime (s)"
    );
    let mut failed = false;
    for r in &rows {
        match (&r.summary, &r.error) {
            (Some(s), _) => println!(
                "{:>14} {:>8} {:>12.5} {:>16.4e} {:>14.3}",
                r.value, r.params.n_particles, r.params.beta, s.mean_precision, s.mean_runtime_s
            ),
            (None, e) => {
                failed = true;
                println!(
                    "{:>14} {:>8} {:>12.5} {:>16} {:>14}",
                    r.value, r.params.n_particles, r.params.beta, "failed", "-"
                );
                eprintln!(
                    "cell {} failed: {}",
                    r.value,
                    e.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
    Ok(if failed {
        runtime_failure()
    } else {
        ExitCode::SUCCESS
    })
}

fn analysis_config<T>(a: &AnalyzeArgs, default: T) -> cb2o::Result<T>
where
    T: serde::Serialize + for<'de> serde::Deserialize<'de>,
{
    let v = layered(
        a.config.as_deref(),
        serde_json::to_value(default)?,
        &a.set,
        &[("seed", a.seed.map(Value::from))],
    )?;
    from_value(v)
}

fn cmd_decay(a: AnalyzeArgs) -> CmdResult {
    let cfg: DecayConfig = analysis_config(&a, DecayConfig::default())?;
    let r = analyze_decay(&cfg)?;
    println!("fitted rate     {}", fmt_f64(r.fitted_rate));
    println!("predicted rate  {}", fmt_f64(r.predicted_rate));
    println!("relative error  {:.4}", r.relative_error);
    println!("r^2             {:.6}", r.r_squared);
    println!("window          [{:.3}, {:.3}]", r.window.0, r.window.1);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        let rows: Vec<Vec<String>> = r
            .series
            .iter()
            .map(|&(t, v)| vec![fmt_f64(t), fmt_f64(v)])
            .collect();
        write_csv(&dir.join("decay_series.csv"), &["t", "V"], &rows)?;
        let report = serde_json::json!({
            "config": cfg,
            "fitted_rate": r.fitted_rate,
            "predicted_rate": r.predicted_rate,
            "relative_error": r.relative_error,
            "r_squared": r.r_squared,
            "window": [r.window.0, r.window.1],
        });
        write_json(&dir.join("decay.json"), &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_instability(a: InstabilityArgs) -> CmdResult {
    if a.points == 0 {
        return Err(Error::Config("--points must be >= 1".into()));
    }
    let rows = instability_sweep(&a.shifts, a.alpha, a.beta, a.points)?;
    println!(
        "{:>12} {:>24} {:>24} {:>14}",
        "s", "w2", "consensus_gap", "gap / w2"
    );
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            println!(
                "{:>12} {:>24} {:>24} {:>14.4e}",
                r.s,
                fmt_f64(r.w2),
                fmt_f64(r.consensus_gap),
                r.consensus_gap / r.w2
            );
            vec![fmt_f64(r.s), fmt_f64(r.w2), fmt_f64(r.consensus_gap)]
        })
        .collect();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_csv(
            &dir.join("instability.csv"),
            &["s", "w2", "consensus_gap"],
            &body,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_laplace(a: AnalyzeArgs) -> CmdResult {
    let cfg: LaplaceTrendConfig = analysis_config(&a, LaplaceTrendConfig::default())?;
    let t = laplace_trend(&cfg)?;
    println!(
        "{:>10} {:>24} {:>24}",
        "alpha", "|m - best selected|", "|m - theta_good|"
    );
    let alpha_rows: Vec<Vec<String>> = t
        .alpha_rows
        .iter()
        .map(|r| {
            println!(
                "{:>10} {:>24.6e} {:>24.6e}",
                r.alpha, r.distance_to_best, r.distance_to_theta_good
            );
            vec![
                fmt_f64(r.alpha),
                fmt_f64(r.distance_to_best),
                fmt_f64(r.distance_to_theta_good),
            ]
        })
        .collect();
    println!();
    println!(
        "{:>10} {:>10} {:>28}",
        "beta", "selected", "max dist to minimisers"
    );
    let beta_rows: Vec<Vec<String>> = t
        .beta_rows
        .iter()
        .map(|r| {
            println!(
                "{:>10} {:>10} {:>28.6e}",
                r.beta, r.selected, r.max_distance_to_minimisers
            );
            vec![
                fmt_f64(r.beta),
                r.selected.to_string(),
                fmt_f64(r.max_distance_to_minimisers),
            ]
        })
        .collect();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        write_csv(
            &dir.join("laplace_alpha.csv"),
            &["alpha", "distance_to_best", "distance_to_theta_good"],
            &alpha_rows,
        )?;
        write_csv(
            &dir.join("laplace_beta.csv"),
            &["beta", "selected", "max_distance_to_minimisers"],
            &beta_rows,
        )?;
        log::debug!("laplace trend: {}", to_json_string(&t)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_demo(a: DemoArgs) -> CmdResult {
    let solver = Cb2oParams {
        n_particles: 200,
        max_iters: 2_000,
        ..Cb2oParams::default()
    };
    let mut cfg = ExperimentConfig::new("himmelblau-demo", Solver::Cb2o, solver);
    cfg.n_seeds = a.seeds;
    cfg.base_seed = a.seed;
    cfg.out = a.out;
    let outcome = run_experiment(&cfg)?;
    if let Some(p) = outcome.replicates.first().map(|r| &r.final_consensus) {
        println!("seed {} consensus point: {:?}", cfg.base_seed, p);
    }
    report_experiment(&outcome)
}
