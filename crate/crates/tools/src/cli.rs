//! The `softirl` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use softirl_core::metrics::{evaluate, Metrics};
use softirl_core::solver::{exact_population_solver, solve};
use softirl_core::{StateDistribution, TransitionDataset};

use crate::config::{AlgorithmName, ExperimentConfig, WeightingName, PRESETS};
use crate::experiment::{run_experiment, Instance};
use crate::formats::{
    read_dataset, read_dir_origin, read_table, write_dataset, write_fit, write_solution, write_text, FitRecord,
    SolutionRecord,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "softirl", version, about = "Softmax IRL by classification and regression")]
struct Cli {
    /// Suppress progress and warnings on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML experiment configuration; defaults to the preset named by the data.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample expert demonstrations into a dataset file.
    GenData {
        /// Preset environment (easy, ident, hard) when no --config is given.
        preset: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the configured sample count.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a reward from a dataset into a solution directory.
    Solve {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the linear MaxEnt baseline into a fit directory.
    Baseline {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a solution or fit directory against the ground truth.
    Eval {
        dir: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Dataset for empirical state weighting.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Metrics file; defaults to metrics.json inside the directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded reruns of both methods and print the results table.
    Reproduce {
        /// Preset (easy, ident, hard) when no --config is given.
        preset: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
        /// Base seed; rerun i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reruns: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print solver diagnostics and contraction data as CSV.
    Diagnose {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let quiet = cli.quiet;
    let mut log = |msg: &str| {
        if !quiet {
            let _ = writeln!(stderr, "{msg}");
        }
    };
    match execute(cli.command, stdout, &mut log) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn resolve_config(config: &ConfigArg, fallback: Option<&str>) -> anyhow::Result<ExperimentConfig> {
    match (&config.config, fallback) {
        (Some(path), _) => Ok(ExperimentConfig::load(path)?),
        (None, Some(name)) if PRESETS.contains(&name) => Ok(ExperimentConfig::preset(name)?),
        (None, Some(name)) => bail!("{name:?} is not a preset ({}); pass --config", PRESETS.join(", ")),
        (None, None) => bail!("name a preset ({}) or pass --config", PRESETS.join(", ")),
    }
}

/// Rebuilds the environment a dataset was drawn from.
fn load_with_instance(
    dataset: &Path,
    config: &ConfigArg,
) -> anyhow::Result<(TransitionDataset, ExperimentConfig, Instance)> {
    let data = read_dataset(dataset)?;
    let cfg = resolve_config(config, Some(&data.meta().env))?;
    let inst = Instance::build(&cfg, data.meta().seed)?;
    let (ns, na) = (inst.env.mdp.n_states(), inst.env.mdp.n_actions());
    if (data.meta().n_states, data.meta().n_actions) != (ns, na) {
        bail!(
            "{}: dataset has {}x{} state-actions but the configured environment has {ns}x{na}",
            dataset.display(),
            data.meta().n_states,
            data.meta().n_actions
        );
    }
    Ok((data, cfg, inst))
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    env: &'a str,
    seed: u64,
    weighting: &'a str,
    ref_action: usize,
    rmse: f64,
    corr: Option<f64>,
    kl: f64,
    tv: f64,
    top1: f64,
}

fn format_metrics(m: &Metrics) -> String {
    let mut out = String::from("metric,value\n");
    for (name, value) in Metrics::NAMES.iter().zip(m.values()) {
        match value {
            Some(x) => writeln!(out, "{name},{x:.4}"),
            None => writeln!(out, "{name},NA"),
        }
        .expect("writing to a String");
    }
    out
}

fn execute(command: Command, stdout: &mut dyn Write, log: &mut dyn FnMut(&str)) -> anyhow::Result<()> {
    match command {
        Command::GenData {
            preset,
            config,
            seed,
            n,
            out,
        } => {
            let mut cfg = resolve_config(&config, preset.as_deref())?;
            if let Some(n) = n {
                cfg.env.n = n;
                cfg.validate()?;
            }
            let inst = Instance::build(&cfg, seed)?;
            let data = inst.sample(&cfg, seed)?;
            write_dataset(&out, &data)?;
            log(&format!("wrote {} records to {}", data.n(), out.display()));
        }
        Command::Solve { dataset, config, out } => {
            let (data, cfg, inst) = load_with_instance(&dataset, &config)?;
            let sol = match cfg.solver.algorithm {
                AlgorithmName::Exact => {
                    exact_population_solver(&inst.env.mdp, &inst.expert, cfg.solver.normalization())?
                }
                _ => solve(&data, &cfg.solver.solver_config(&inst.env), None)
                    .with_context(|| format!("solving {}", dataset.display()))?,
            };
            for w in &sol.diagnostics.warnings {
                log(&format!("warning: {w}"));
            }
            let meta = data.meta();
            let record = SolutionRecord::new(&sol, &meta.env, meta.seed, cfg.solver.algorithm.as_str());
            write_solution(&out, &sol, &record)?;
            log(&format!("wrote solution to {}", out.display()));
        }
        Command::Baseline { dataset, config, out } => {
            let (data, cfg, inst) = load_with_instance(&dataset, &config)?;
            let fit = inst.fit_baseline(&cfg, &data, data.meta().seed)?;
            let record = FitRecord {
                env: data.meta().env.clone(),
                seed: data.meta().seed,
                gamma: cfg.env.gamma,
                best_epoch: fit.best_epoch,
                epochs: fit.loss_trace.len() - 1,
            };
            write_fit(&out, &fit, &record)?;
            log(&format!("wrote fit to {}", out.display()));
        }
        Command::Eval { dir, config, data, out } => {
            let origin = read_dir_origin(&dir)?;
            let cfg = resolve_config(&config, Some(&origin.env))?;
            let inst = Instance::build(&cfg, origin.seed)?;
            let r = read_table(&dir.join("r.csv"))?;
            let v = read_table(&dir.join("v.csv"))?;
            let q = r.add_scaled(&v, origin.gamma).context("r.csv and v.csv disagree in shape")?;
            let weighting = match (cfg.eval.weighting, data) {
                (WeightingName::Uniform, _) => StateDistribution::uniform(inst.env.mdp.n_states()),
                (WeightingName::Empirical, Some(path)) => read_dataset(&path)?.state_distribution()?,
                (WeightingName::Empirical, None) => bail!("empirical weighting needs --data"),
            };
            let m = evaluate(&inst.truth, &q, &weighting, cfg.eval.ref_action)
                .with_context(|| format!("evaluating {}", dir.display()))?;
            let file = MetricsFile {
                env: &origin.env,
                seed: origin.seed,
                weighting: match cfg.eval.weighting {
                    WeightingName::Uniform => "uniform",
                    WeightingName::Empirical => "empirical",
                },
                ref_action: cfg.eval.ref_action,
                rmse: m.rmse_qdiff,
                corr: m.corr_qdiff,
                kl: m.kl,
                tv: m.tv,
                top1: m.top1,
            };
            let path = out.unwrap_or_else(|| dir.join("metrics.json"));
            write_text(&path, &(serde_json::to_string_pretty(&file)? + "\n"))?;
            write!(stdout, "{}", format_metrics(&m))?;
        }
        Command::Reproduce {
            preset,
            config,
            seed,
            reruns,
            out,
        } => {
            let mut cfg = resolve_config(&config, preset.as_deref())?;
            if let Some(seed) = seed {
                cfg.eval.base_seed = seed;
            }
            if let Some(reruns) = reruns {
                cfg.eval.reruns = reruns;
            }
            let report = run_experiment(&cfg)?;
            for w in report.warnings() {
                log(&format!("warning: {w}"));
            }
            if let Some(dir) = out.or_else(|| cfg.eval.out.clone()) {
                report.write(&dir)?;
                log(&format!("wrote results to {}", dir.display()));
            }
            write!(stdout, "{}", report.table_md())?;
        }
        Command::Diagnose { dataset, config, out } => {
            let (data, cfg, inst) = load_with_instance(&dataset, &config)?;
            if cfg.solver.algorithm == AlgorithmName::Exact {
                bail!("diagnose needs a data-driven algorithm, not exact");
            }
            let sol = inst.solve(&cfg, &data)?;
            let exact = exact_population_solver(&inst.env.mdp, &inst.expert, cfg.solver.normalization())?;
            let csv = diagnose_csv(&sol.diagnostics, exact.v_hat.sup_norm(), cfg.env.gamma)?;
            if let Some(path) = out {
                write_text(&path, &csv)?;
            }
            write!(stdout, "{csv}")?;
        }
    }
    Ok(())
}

/// Scalar diagnostics, then one row per iteration with the bound `gamma^k |v*|`.
fn diagnose_csv(
    d: &softirl_core::solver::SolverDiagnostics,
    v_star_sup: f64,
    gamma: f64,
) -> anyhow::Result<String> {
    let opt = |x: Option<f64>| x.map_or("NA".to_string(), |x| x.to_string());
    let mut out = String::from("quantity,value\n");
    writeln!(out, "iterations,{}", d.iterations)?;
    writeln!(out, "nu_proxy,{}", d.nu_proxy)?;
    writeln!(out, "nu,{}", opt(d.nu))?;
    writeln!(out, "kappa_hat,{}", opt(d.kappa_hat))?;
    writeln!(out, "v_star_sup,{v_star_sup}")?;
    writeln!(out, "unvisited_states,{}", d.unvisited_states.len())?;
    out.push_str("\nk,eta,eta_population,distance_to_exact,contraction_bound\n");
    let pop = d.eta_population.as_ref().ok_or_else(|| anyhow!("missing population diagnostics"))?;
    let dist = d.distance_to_exact.as_ref().ok_or_else(|| anyhow!("missing distance diagnostics"))?;
    for (k, ((eta, p), e)) in d.eta.iter().zip(pop).zip(dist).enumerate() {
        let k = k + 1;
        writeln!(out, "{k},{eta},{p},{e},{}", gamma.powi(k as i32) * v_star_sup)?;
    }
    Ok(out)
}
