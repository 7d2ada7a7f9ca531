//! Seeded reruns of solver and baseline on a gridworld, with aggregation.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use softirl_core::data::sample_transitions;
use softirl_core::gridworld::{build_env, expert_policy, GridEnv, EXPERT_MAX_ITER, EXPERT_TOL};
use softirl_core::maxent::{maxent_fit, MaxEntFit};
use softirl_core::metrics::{evaluate, summarize, Metrics, Summary, Truth};
use softirl_core::solver::{exact_population_solver, solve, Benchmark, IrlSolution};
use softirl_core::{PolicyTable, StateDistribution, TransitionDataset};

use crate::config::{AlgorithmName, ConfigError, ExperimentConfig, WeightingName};
use crate::formats::{write_text, FormatError};

/// Fraction of reruns that must succeed.
pub const MIN_SUCCESS_RATE: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("rerun {rerun} (seed {seed}): {message}")]
    Rerun { rerun: usize, seed: u64, message: String },
    #[error("only {succeeded} of {total} reruns succeeded; first failure: {first}")]
    TooManyFailures { succeeded: usize, total: usize, first: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MaxEnt,
    Ours,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MaxEnt => "maxent",
            Method::Ours => "ours",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::MaxEnt => "MaxEnt",
            Method::Ours => "Ours",
        }
    }
}

/// A built domain with its expert and ground truth.
#[derive(Debug, Clone)]
pub struct Instance {
    pub env: GridEnv,
    pub expert: PolicyTable,
    pub truth: Truth,
}

impl Instance {
    pub fn build(cfg: &ExperimentConfig, seed: u64) -> softirl_core::Result<Self> {
        let env = build_env(&cfg.env.spec(seed))?;
        let expert = expert_policy(&env.mdp, &env.r_true)?;
        let truth = Truth::from_reward(&env.mdp, &env.r_true, EXPERT_TOL, EXPERT_MAX_ITER)?;
        Ok(Self { env, expert, truth })
    }

    pub fn sample(&self, cfg: &ExperimentConfig, seed: u64) -> softirl_core::Result<TransitionDataset> {
        let init = cfg
            .env
            .init_distribution()
            .map_err(|e| softirl_core::Error::InvalidArgument(e.to_string()))?;
        sample_transitions(&self.env.mdp, &self.expert, cfg.env.n, &init, cfg.env.regime(), seed, &cfg.env.name)
    }

    /// Runs the configured solver in benchmark mode.
    pub fn solve(&self, cfg: &ExperimentConfig, data: &TransitionDataset) -> softirl_core::Result<IrlSolution> {
        match cfg.solver.algorithm {
            AlgorithmName::Exact => exact_population_solver(&self.env.mdp, &self.expert, cfg.solver.normalization()),
            AlgorithmName::ClassifyRegress | AlgorithmName::Split => {
                let bench = Benchmark {
                    mdp: &self.env.mdp,
                    policy: &self.expert,
                };
                solve(data, &cfg.solver.solver_config(&self.env), Some(bench))
            }
        }
    }

    pub fn fit_baseline(
        &self,
        cfg: &ExperimentConfig,
        data: &TransitionDataset,
        seed: u64,
    ) -> softirl_core::Result<MaxEntFit> {
        let phi = cfg.baseline.features.build(&self.env);
        maxent_fit(&self.env.mdp, &phi, data, &cfg.baseline.maxent_config(seed))
    }

    pub fn weighting(&self, cfg: &ExperimentConfig, data: &TransitionDataset) -> softirl_core::Result<StateDistribution> {
        match cfg.eval.weighting {
            WeightingName::Uniform => Ok(StateDistribution::uniform(self.env.mdp.n_states())),
            WeightingName::Empirical => data.state_distribution(),
        }
    }
}

fn rerun_error(rerun: usize, seed: u64, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Rerun {
        rerun,
        seed,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerunOutcome {
    pub rerun: usize,
    pub seed: u64,
    /// Per-method metrics, MaxEnt first when the baseline is enabled.
    pub results: Vec<(Method, Metrics)>,
    pub warnings: Vec<String>,
}

impl RerunOutcome {
    pub fn metrics(&self, method: Method) -> Option<&Metrics> {
        self.results.iter().find(|(m, _)| *m == method).map(|(_, x)| x)
    }
}

pub fn run_rerun(cfg: &ExperimentConfig, rerun: usize) -> Result<RerunOutcome, ExperimentError> {
    let seed = cfg.eval.base_seed.wrapping_add(rerun as u64);
    let fail = |e: softirl_core::Error| rerun_error(rerun, seed, e);
    let inst = Instance::build(cfg, seed).map_err(fail)?;
    let data = inst.sample(cfg, seed).map_err(fail)?;
    let weighting = inst.weighting(cfg, &data).map_err(fail)?;
    let ref_action = cfg.eval.ref_action;

    let mut results = Vec::with_capacity(2);
    if cfg.baseline.enabled {
        let fit = inst.fit_baseline(cfg, &data, seed).map_err(fail)?;
        let m = evaluate(&inst.truth, &fit.q(cfg.env.gamma), &weighting, ref_action).map_err(fail)?;
        results.push((Method::MaxEnt, m));
    }
    let sol = inst.solve(cfg, &data).map_err(fail)?;
    let m = evaluate(&inst.truth, &sol.q(), &weighting, ref_action).map_err(fail)?;
    results.push((Method::Ours, m));
    Ok(RerunOutcome {
        rerun,
        seed,
        results,
        warnings: sol.diagnostics.warnings,
    })
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub outcomes: Vec<RerunOutcome>,
    /// Failed reruns, excluded from aggregation.
    pub failures: Vec<ExperimentError>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let runs = (0..cfg.eval.reruns).into_par_iter().map(|i| run_rerun(cfg, i)).collect();
    aggregate(cfg, runs)
}

/// Splits rerun results into outcomes and excluded failures, enforcing
/// [`MIN_SUCCESS_RATE`].
pub fn aggregate(
    cfg: &ExperimentConfig,
    runs: Vec<Result<RerunOutcome, ExperimentError>>,
) -> Result<ExperimentReport, ExperimentError> {
    let total = runs.len();
    let mut outcomes = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for run in runs {
        match run {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(e),
        }
    }
    if total == 0 || (outcomes.len() as f64) < MIN_SUCCESS_RATE * total as f64 {
        return Err(ExperimentError::TooManyFailures {
            succeeded: outcomes.len(),
            total,
            first: failures.first().map(ToString::to_string).unwrap_or_default(),
        });
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        outcomes,
        failures,
    })
}

fn push_value(out: &mut String, x: Option<f64>) {
    match x {
        Some(x) => write!(out, "{x}").expect("writing to a String"),
        None => out.push_str("NA"),
    }
}

impl ExperimentReport {
    pub fn methods(&self) -> Vec<Method> {
        let mut methods = Vec::new();
        if self.config.baseline.enabled {
            methods.push(Method::MaxEnt);
        }
        methods.push(Method::Ours);
        methods
    }

    /// Per-rerun values of one metric; missing correlations are skipped.
    pub fn values(&self, method: Method, metric: usize) -> Vec<f64> {
        self.outcomes
            .iter()
            .filter_map(|o| o.metrics(method).and_then(|m| m.values()[metric]))
            .collect()
    }

    pub fn summary(&self, method: Method, metric: usize) -> Option<Summary> {
        summarize(&self.values(method, metric))
    }

    /// Warning lines: failed reruns and solver warnings.
    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = self.failures.iter().map(|e| format!("excluded {e}")).collect();
        for o in &self.outcomes {
            out.extend(o.warnings.iter().map(|w| format!("rerun {} (seed {}): {w}", o.rerun, o.seed)));
        }
        out
    }

    /// `rerun,seed,method,metric,value`; a missing correlation is `NA`.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("rerun,seed,method,metric,value\n");
        for o in &self.outcomes {
            for (method, m) in &o.results {
                for (name, value) in Metrics::NAMES.iter().zip(m.values()) {
                    write!(out, "{},{},{},{name},", o.rerun, o.seed, method.as_str()).expect("writing to a String");
                    push_value(&mut out, value);
                    out.push('\n');
                }
            }
        }
        out
    }

    /// `method,metric,mean,se,count`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,metric,mean,se,count\n");
        for method in self.methods() {
            for (i, name) in Metrics::NAMES.iter().enumerate() {
                let s = self.summary(method, i);
                write!(out, "{},{name},", method.as_str()).expect("writing to a String");
                push_value(&mut out, s.map(|s| s.mean));
                out.push(',');
                push_value(&mut out, s.and_then(|s| s.se));
                writeln!(out, ",{}", s.map_or(0, |s| s.count)).expect("writing to a String");
            }
        }
        out
    }

    /// Markdown table with one row per method: RMSE, Corr, KL, TV, Top-1 as mean ± SE.
    pub fn table_md(&self) -> String {
        let mut out = format!(
            "| {} | RMSE | Corr | KL | TV | Top-1 |\n|---|---|---|---|---|---|\n",
            self.config.env.name
        );
        for method in self.methods() {
            out.push_str("| ");
            out.push_str(method.label());
            for i in 0..Metrics::NAMES.len() {
                let digits = if Metrics::NAMES[i] == "kl" { 4 } else { 3 };
                out.push_str(" | ");
                match self.summary(method, i) {
                    Some(Summary { mean, se: Some(se), .. }) => {
                        write!(out, "{mean:.digits$} ± {se:.digits$}").expect("writing to a String")
                    }
                    Some(Summary { mean, se: None, .. }) => write!(out, "{mean:.digits$}").expect("writing to a String"),
                    None => out.push_str("NA"),
                }
            }
            out.push_str(" |\n");
        }
        writeln!(
            out,
            "\n{} of {} reruns, n = {}, {} state weighting.",
            self.outcomes.len(),
            self.config.eval.reruns,
            self.config.env.n,
            match self.config.eval.weighting {
                WeightingName::Uniform => "uniform",
                WeightingName::Empirical => "empirical",
            }
        )
        .expect("writing to a String");
        out
    }

    /// Writes `raw.csv`, `summary.csv`, `table.md` and `config.toml`.
    pub fn write(&self, dir: &Path) -> Result<(), FormatError> {
        write_text(&dir.join("raw.csv"), &self.raw_csv())?;
        write_text(&dir.join("summary.csv"), &self.summary_csv())?;
        write_text(&dir.join("table.md"), &self.table_md())?;
        write_text(&dir.join("config.toml"), &self.config.to_toml())
    }
}
