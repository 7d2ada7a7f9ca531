//! Reward and soft-value recovery.
//!
//! Every maximizer of the conditional likelihood under the soft Bellman
//! constraint is a potential shaping of `(u*, 0)` with `u* = log pi`. The
//! normalized solution uses the potential `c*` solving the linear system
//! `c* - gamma mu P c* = -mu u*`, and then
//!
//! ```text
//! v* = P c*,    r* = u* + c* - gamma v*.
//! ```
//!
//! Equivalently `v*` is the fixed point of the affine gamma-contraction
//! `T_u v = P mu (gamma v - u)`, which the sample-based solvers approximate
//! with a classifier (for `u`) and repeated regressions (for `P`).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::data::TransitionDataset;
use crate::error::{Error, Result};
use crate::math;
use crate::mdp::{
    apply_p, expect_mu, stationary_distribution, weighted_l2_norm, PolicyTable, StateActionFn, StateFn,
    TabularMdp,
};
use crate::oracles::{fit_classifier, fit_regressor, log_policy, ClassifierSpec, RegressionSample, RegressorSpec};

/// Largest iteration count `IterationCount::Auto` resolves to.
pub const AUTO_K_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationKind {
    /// All reward mass on one reference action: `r(s, a0) = 0`.
    PointMass(usize),
    Uniform,
    /// The (estimated) behavior policy.
    BehaviorPolicy,
}

/// A normalization measure `mu(a | s)` together with its realized table.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationMeasure {
    pub kind: NormalizationKind,
    pub realized: PolicyTable,
}

impl NormalizationMeasure {
    /// `behavior` is required for `BehaviorPolicy` and ignored otherwise.
    pub fn realize(
        kind: NormalizationKind,
        n_states: usize,
        n_actions: usize,
        behavior: Option<&PolicyTable>,
    ) -> Result<Self> {
        let realized = match kind {
            NormalizationKind::PointMass(a0) => PolicyTable::point_mass(n_states, n_actions, a0)?,
            NormalizationKind::Uniform => PolicyTable::uniform(n_states, n_actions),
            NormalizationKind::BehaviorPolicy => {
                let pi = behavior.ok_or_else(|| {
                    Error::InvalidArgument("behavior-policy normalization needs a policy".into())
                })?;
                if pi.n_states() != n_states || pi.n_actions() != n_actions {
                    return Err(Error::shape("behavior policy", n_states * n_actions, pi.probs().len()));
                }
                pi.clone()
            }
        };
        Ok(Self { kind, realized })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationCount {
    /// `max(1, ceil(ln n / ln(1/gamma)))`, capped at [`AUTO_K_CAP`], so that
    /// `gamma^K <= 1/n`.
    Auto,
    Fixed(usize),
}

pub fn auto_k(n: usize, gamma: f64) -> usize {
    if n <= 1 || gamma <= 0.0 {
        return 1;
    }
    let k = math::ln(n as f64) / math::ln(1.0 / gamma);
    (libm::ceil(k) as usize).clamp(1, AUTO_K_CAP)
}

impl IterationCount {
    pub fn resolve(self, n: usize, gamma: f64) -> usize {
        match self {
            IterationCount::Auto => auto_k(n, gamma),
            IterationCount::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub k: IterationCount,
    pub mu: NormalizationKind,
    pub classifier: ClassifierSpec,
    pub regressor: RegressorSpec,
    /// Sample-split variant: classifier on one half, each regression on its
    /// own fold of the other half.
    pub split: bool,
}

impl SolverConfig {
    pub fn tabular(gamma: f64) -> Self {
        Self {
            gamma,
            k: IterationCount::Auto,
            mu: NormalizationKind::Uniform,
            classifier: ClassifierSpec::tabular(0.0),
            regressor: RegressorSpec::tabular(0.0),
            split: false,
        }
    }
}

/// The true model, when known. Enables population diagnostics and makes a
/// behavior-policy normalization use the true policy.
#[derive(Debug, Clone, Copy)]
pub struct Benchmark<'a> {
    pub mdp: &'a TabularMdp,
    pub policy: &'a PolicyTable,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Root-mean-square regression residual on the fitting fold, per iteration.
    pub eta: Vec<f64>,
    /// Benchmark only: `||v^(k) - T_u v^(k-1)||_inf` under the true kernel.
    pub eta_population: Option<Vec<f64>>,
    /// Benchmark only: `||v^(k) - v*||_inf` against the exact solution for the true policy.
    pub distance_to_exact: Option<Vec<f64>>,
    /// Mean KL from the empirical conditional to `pi_hat` on the classification data.
    pub nu_proxy: f64,
    /// Benchmark only: `||u_hat - u*||` under the data distribution.
    pub nu: Option<f64>,
    /// Benchmark only: `max (lambda x mu)(s,a) / P_hat(s,a)`.
    pub kappa_hat: Option<f64>,
    pub unvisited_states: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlSolution {
    pub r_hat: StateActionFn,
    pub v_hat: StateActionFn,
    pub u_hat: StateActionFn,
    pub c_hat: StateFn,
    pub mu: NormalizationMeasure,
    pub gamma: f64,
    pub diagnostics: SolverDiagnostics,
}

impl IrlSolution {
    /// `Q = r + gamma v`.
    pub fn q(&self) -> StateActionFn {
        self.r_hat.add_scaled(&self.v_hat, self.gamma).expect("solution tables share a shape")
    }
}

/// `T_u v = P mu (gamma v - u)`.
pub fn t_u_apply(
    mdp: &TabularMdp,
    mu: &NormalizationMeasure,
    u: &StateActionFn,
    v: &StateActionFn,
) -> Result<StateActionFn> {
    let inner = v.zip_with(u, |v, u| mdp.gamma() * v - u)?;
    apply_p(mdp, &expect_mu(&mu.realized, &inner)?)
}

/// Potential shaping: `(r + c - gamma P c, v + P c)`.
pub fn shape(
    r: &StateActionFn,
    v: &StateActionFn,
    c: &StateFn,
    mdp: &TabularMdp,
) -> Result<(StateActionFn, StateActionFn)> {
    r.same_shape(v)?;
    let pc = apply_p(mdp, c)?;
    let r_shaped = r.add_state_fn(c)?.add_scaled(&pc, -mdp.gamma())?;
    let v_shaped = v.add_scaled(&pc, 1.0)?;
    Ok((r_shaped, v_shaped))
}

/// `max_s |sum_a mu(a|s) r(s,a)|`.
pub fn check_normalization(r: &StateActionFn, mu: &NormalizationMeasure) -> Result<f64> {
    Ok(expect_mu(&mu.realized, r)?.sup_norm())
}

/// `r = w - mu w` with `w = u - gamma v`; the potential is `c = -mu w`.
///
/// Written this way a point-mass measure gives `r(s, a0) = 0` exactly.
fn normalized_reward(
    u: &StateActionFn,
    v: &StateActionFn,
    mu: &PolicyTable,
    gamma: f64,
) -> Result<(StateActionFn, StateFn)> {
    let w = u.zip_with(v, |u, v| u - gamma * v)?;
    let mu_w = expect_mu(mu, &w)?;
    let r = StateActionFn::from_fn(w.n_states(), w.n_actions(), |s, a| w.get(s, a) - mu_w[s]);
    let c = StateFn::from_fn(w.n_states(), |s| -mu_w[s]);
    Ok((r, c))
}

/// The unique normalized maximizer for a known kernel and behavior policy,
/// by a dense solve of `(I - gamma mu P) c = -mu u*`.
pub fn exact_population_solver(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    mu_kind: NormalizationKind,
) -> Result<IrlSolution> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mu = NormalizationMeasure::realize(mu_kind, ns, na, Some(pi))?;
    let u = pi.log_table()?;
    let gamma = mdp.gamma();
    let mut a = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        for act in 0..na {
            let m = mu.realized.prob(s, act);
            if m == 0.0 {
                continue;
            }
            for &(s2, p) in mdp.successors(s, act) {
                a[(s, s2)] -= gamma * m * p;
            }
        }
    }
    let mu_u = expect_mu(&mu.realized, &u)?;
    let b = DVector::from_iterator(ns, mu_u.values().iter().map(|x| -x));
    let c = a.clone().lu().solve(&b).ok_or(Error::Singular {
        context: "normalization equation",
        residual: f64::INFINITY,
    })?;
    let resid = (&a * &c - &b).amax();
    if !(resid <= 1e-10 * c.amax().max(1.0)) {
        return Err(Error::Singular {
            context: "normalization equation",
            residual: resid,
        });
    }
    let c = StateFn::new(c.as_slice().to_vec())?;
    let v = apply_p(mdp, &c)?;
    let (r, c_hat) = normalized_reward(&u, &v, &mu.realized, gamma)?;
    Ok(IrlSolution {
        r_hat: r,
        v_hat: v,
        u_hat: u,
        c_hat,
        mu,
        gamma,
        diagnostics: SolverDiagnostics::default(),
    })
}

/// Dispatches to the full-data or the sample-split solver.
pub fn solve(data: &TransitionDataset, cfg: &SolverConfig, bench: Option<Benchmark<'_>>) -> Result<IrlSolution> {
    if cfg.split {
        split_classify_regress(data, cfg, bench)
    } else {
        classify_then_regress(data, cfg, bench)
    }
}

/// Classify, then iterate `K` regressions of
/// `y_i = sum_a mu(a|s'_i) (gamma v^(k-1)(s'_i, a) - u_hat(s'_i, a))` on `(s_i, a_i)`.
pub fn classify_then_regress(
    data: &TransitionDataset,
    cfg: &SolverConfig,
    bench: Option<Benchmark<'_>>,
) -> Result<IrlSolution> {
    check_config(data, cfg, bench)?;
    let k = cfg.k.resolve(data.n(), cfg.gamma);
    let all: Vec<usize> = (0..data.n()).collect();
    let folds = vec![all.clone(); k.min(1)];
    run(data, cfg, bench, &all, FoldPlan::Shared(folds.first().map(Vec::as_slice).unwrap_or(&[])), k)
}

/// Sample-split variant: `pi_hat` from one half of the data; regression `k`
/// uses only fold `k` of the other half, folds of size `floor(n / 2K)`.
pub fn split_classify_regress(
    data: &TransitionDataset,
    cfg: &SolverConfig,
    bench: Option<Benchmark<'_>>,
) -> Result<IrlSolution> {
    check_config(data, cfg, bench)?;
    let k = cfg.k.resolve(data.n(), cfg.gamma).max(1);
    let cls: Vec<usize> = (0..data.n()).step_by(2).collect();
    let reg: Vec<usize> = (1..data.n()).step_by(2).collect();
    let fold_size = reg.len() / k;
    if fold_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "{k} regression folds need at least {} samples, got {}",
            2 * k,
            data.n()
        )));
    }
    let folds: Vec<Vec<usize>> = (0..k)
        .map(|f| reg.iter().copied().skip(f).step_by(k).take(fold_size).collect())
        .collect();
    run(data, cfg, bench, &cls, FoldPlan::PerIteration(&folds), k)
}

enum FoldPlan<'a> {
    Shared(&'a [usize]),
    PerIteration(&'a [Vec<usize>]),
}

fn check_config(data: &TransitionDataset, cfg: &SolverConfig, bench: Option<Benchmark<'_>>) -> Result<()> {
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(Error::InvalidArgument(format!("discount must lie in [0, 1), got {}", cfg.gamma)));
    }
    if data.is_empty() {
        return Err(Error::EmptyData { context: "solver" });
    }
    if let Some(b) = bench {
        if b.mdp.n_states() != data.meta().n_states || b.mdp.n_actions() != data.meta().n_actions {
            return Err(Error::shape("benchmark MDP", data.meta().n_states, b.mdp.n_states()));
        }
        if (b.mdp.gamma() - cfg.gamma).abs() > 0.0 {
            return Err(Error::InvalidArgument("benchmark MDP and solver disagree on the discount".into()));
        }
    }
    Ok(())
}

fn run(
    data: &TransitionDataset,
    cfg: &SolverConfig,
    bench: Option<Benchmark<'_>>,
    cls_idx: &[usize],
    plan: FoldPlan<'_>,
    k: usize,
) -> Result<IrlSolution> {
    let (ns, na) = (data.meta().n_states, data.meta().n_actions);
    let gamma = cfg.gamma;
    let mut diag = SolverDiagnostics::default();

    let cls_data = if cls_idx.len() == data.n() { data.clone() } else { data.subset(cls_idx) };
    let classifier = fit_classifier(&cfg.classifier, &cls_data).map_err(|e| Error::Oracle {
        iteration: 0,
        source: alloc::boxed::Box::new(e),
    })?;
    let u_hat = log_policy(&classifier);
    diag.nu_proxy = empirical_kl(&cls_data, &classifier.policy);
    diag.unvisited_states = classifier.unvisited_states.clone();
    if !classifier.unvisited_states.is_empty() {
        diag.warnings.push(format!(
            "{} states have no classification data and use a default row",
            classifier.unvisited_states.len()
        ));
    }

    let behavior = match bench {
        Some(b) => b.policy,
        None => &classifier.policy,
    };
    let mu = NormalizationMeasure::realize(cfg.mu, ns, na, Some(behavior))?;

    let exact = match bench {
        Some(b) => Some(exact_population_solver(b.mdp, b.policy, cfg.mu)?),
        None => None,
    };

    let mut v = StateActionFn::zeros(ns, na);
    let mut samples: Vec<RegressionSample> = Vec::new();
    let mut eta_pop = Vec::new();
    let mut dist = Vec::new();
    let mut fold_gaps = 0usize;
    for iter in 1..=k {
        let fold: &[usize] = match &plan {
            FoldPlan::Shared(idx) => idx,
            FoldPlan::PerIteration(folds) => &folds[iter - 1],
        };
        let inner = v.zip_with(&u_hat, |v, u| gamma * v - u)?;
        let target = expect_mu(&mu.realized, &inner)?;
        samples.clear();
        samples.extend(fold.iter().map(|&i| {
            let t = data.records()[i];
            RegressionSample {
                s: t.s,
                a: t.a,
                y: target[t.s_next],
                w: data.weight(i),
            }
        }));
        let fitted = fit_regressor(&cfg.regressor, ns, na, &samples).map_err(|e| Error::Oracle {
            iteration: iter,
            source: alloc::boxed::Box::new(e),
        })?;
        if fitted.unvisited_cells > 0 {
            fold_gaps += 1;
            if matches!(plan, FoldPlan::Shared(_)) && iter == 1 {
                diag.warnings.push(format!(
                    "{} state-action cells have no regression data",
                    fitted.unvisited_cells
                ));
            }
        }
        diag.eta.push(fitted.train_rmse);
        let next = fitted.into_table();
        if let (Some(b), Some(ex)) = (bench, exact.as_ref()) {
            let applied = t_u_apply(b.mdp, &mu, &u_hat, &v)?;
            eta_pop.push(next.max_abs_diff(&applied)?);
            dist.push(next.max_abs_diff(&ex.v_hat)?);
        }
        v = next;
    }
    if let FoldPlan::PerIteration(folds) = &plan {
        let size = folds.first().map_or(0, Vec::len);
        if size < ns * na {
            diag.warnings.push(format!(
                "regression folds hold {size} samples for {} state-action cells; coverage is incomplete",
                ns * na
            ));
        }
        if fold_gaps > 0 {
            diag.warnings.push(format!("{fold_gaps} of {k} folds left cells without data"));
        }
    }
    diag.iterations = k;

    if let (Some(b), Some(ex)) = (bench, exact.as_ref()) {
        diag.eta_population = Some(eta_pop);
        diag.distance_to_exact = Some(dist);
        let weights = data.sa_distribution()?;
        let du = u_hat.add_scaled(&ex.u_hat, -1.0)?;
        diag.nu = Some(weighted_l2_norm(&du, &weights)?);
        match stationary_distribution(b.mdp, &mu.realized, 1e-12) {
            Ok(lambda) => {
                let mut kappa: f64 = 0.0;
                let mut gap = false;
                for s in 0..ns {
                    for a in 0..na {
                        let target = lambda[s] * mu.realized.prob(s, a);
                        if target <= 0.0 {
                            continue;
                        }
                        let p = weights.weight(s, a);
                        if p <= 0.0 {
                            gap = true;
                        } else {
                            kappa = kappa.max(target / p);
                        }
                    }
                }
                if gap {
                    diag.warnings.push("data misses cells charged by lambda x mu; kappa is unbounded".into());
                } else {
                    diag.kappa_hat = Some(kappa);
                }
            }
            Err(e) => diag.warnings.push(format!("no stationary distribution for kappa: {e}")),
        }
    }

    let (r_hat, c_hat) = normalized_reward(&u_hat, &v, &mu.realized, gamma)?;
    Ok(IrlSolution {
        r_hat,
        v_hat: v,
        u_hat,
        c_hat,
        mu,
        gamma,
        diagnostics: diag,
    })
}

/// `sum_s p(s) KL(p_emp(.|s) || pi(.|s))` over the data.
fn empirical_kl(data: &TransitionDataset, pi: &PolicyTable) -> f64 {
    let na = pi.n_actions();
    let mut counts = vec![0.0; pi.n_states() * na];
    let mut total = 0.0;
    for (i, t) in data.records().iter().enumerate() {
        counts[t.s * na + t.a] += data.weight(i);
        total += data.weight(i);
    }
    if total <= 0.0 {
        return 0.0;
    }
    let mut kl = 0.0;
    for (s, row) in counts.chunks_exact(na).enumerate() {
        let n_s: f64 = row.iter().sum();
        for (a, &c) in row.iter().enumerate() {
            if c > 0.0 {
                kl += c / total * math::ln(c / n_s / pi.prob(s, a));
            }
        }
    }
    kl.max(0.0)
}
