//! Linear-reward maximum-entropy IRL baseline.
//!
//! The reward is `r = Phi theta`. Each evaluation solves the soft Bellman
//! equation for `r` and scores the conditional log-likelihood of the observed
//! actions under the softmax policy. The gradient is exact: with
//! `M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s')` the sensitivity of `Q` is
//! `(I - gamma M)^{-1} Phi`, so one adjoint solve `(I - gamma M)^T z = g`
//! gives `grad = Phi^T z`, where `g(s,a) = rho(s,a) - rho(s) pi(a|s)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::data::TransitionDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::math;
use crate::mdp::{
    soft_value_iteration_from, state_action_kernel, PolicyTable, SaDistribution, SoftValueSolution, StateActionFn,
    TabularMdp,
};
use crate::rng;

pub const DEFAULT_INNER_TOL: f64 = 1e-10;
pub const DEFAULT_INNER_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    Zeros,
    Gaussian { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSchedule {
    Constant,
    /// `step / sqrt(t)` at epoch `t`.
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain ascent on the clipped gradient.
    ClippedAscent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntConfig {
    pub init: WeightInit,
    pub step_size: f64,
    pub schedule: StepSchedule,
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a loss improvement above `tolerance`.
    pub patience: usize,
    pub tolerance: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub optimizer: Optimizer,
    /// When `k > 0`, every `k`-th record is held out and early stopping
    /// tracks the held-out loss instead of the training loss.
    pub holdout_every: usize,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        Self {
            init: WeightInit::Zeros,
            step_size: 1.0,
            schedule: StepSchedule::InvSqrt,
            clip_norm: 10.0,
            max_epochs: 500,
            patience: 50,
            tolerance: 1e-9,
            inner_tol: DEFAULT_INNER_TOL,
            inner_max_iter: DEFAULT_INNER_MAX_ITER,
            optimizer: Optimizer::ClippedAscent,
            holdout_every: 0,
        }
    }
}

impl MaxEntConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument("step size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("gradient clip norm must be positive".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidArgument("inner tolerance must be positive".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::InvalidArgument("Adam needs betas in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MaxEntFit {
    pub theta: Vec<f64>,
    pub r_hat: StateActionFn,
    pub v_hat: StateActionFn,
    pub policy: PolicyTable,
    /// Negative mean log-likelihood at each evaluated iterate, starting with
    /// the initial weights; on held-out records when a holdout is configured.
    pub loss_trace: Vec<f64>,
    /// Running minimum of `loss_trace`.
    pub best_trace: Vec<f64>,
    pub best_epoch: usize,
}

impl MaxEntFit {
    pub fn q(&self, gamma: f64) -> StateActionFn {
        self.r_hat.add_scaled(&self.v_hat, gamma).expect("fit tables share a shape")
    }
}

/// Likelihood, gradient and the soft solution they were computed from.
#[derive(Debug, Clone)]
pub struct LoglikGrad {
    pub loglik: f64,
    pub grad: Vec<f64>,
    pub solution: SoftValueSolution,
}

/// Mean conditional log-likelihood of the data under `r = Phi theta` and its exact gradient.
pub fn maxent_loglik_and_grad(
    mdp: &TabularMdp,
    phi: &FeatureMap,
    theta: &[f64],
    data: &TransitionDataset,
) -> Result<(f64, Vec<f64>)> {
    let rho = data.sa_distribution()?;
    let out = loglik_and_grad(mdp, phi, theta, &rho, None, DEFAULT_INNER_TOL, DEFAULT_INNER_MAX_ITER)?;
    Ok((out.loglik, out.grad))
}

/// As [`maxent_loglik_and_grad`] on a precomputed `(s, a)` distribution,
/// optionally warm-starting soft value iteration.
pub fn loglik_and_grad(
    mdp: &TabularMdp,
    phi: &FeatureMap,
    theta: &[f64],
    rho: &SaDistribution,
    warm: Option<&StateActionFn>,
    inner_tol: f64,
    inner_max_iter: usize,
) -> Result<LoglikGrad> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if phi.n_states() != ns || phi.n_actions() != na {
        return Err(Error::shape("feature map", ns * na, phi.n_states() * phi.n_actions()));
    }
    if rho.n_states() != ns || rho.n_actions() != na {
        return Err(Error::shape("data distribution", ns * na, rho.n_states() * rho.n_actions()));
    }
    let r = phi.linear(theta)?;
    let v0 = warm.cloned().unwrap_or_else(|| StateActionFn::zeros(ns, na));
    let solution = soft_value_iteration_from(mdp, &r, v0, inner_tol, inner_max_iter)?;
    let pi = &solution.policy;

    let mut loglik = 0.0;
    let mut g = vec![0.0; ns * na];
    let rho_s = rho.state_marginal();
    for s in 0..ns {
        let q = solution.q.row(s);
        let lse = math::logsumexp(q);
        for a in 0..na {
            let w = rho.weight(s, a);
            if w > 0.0 {
                loglik += w * (q[a] - lse);
            }
            g[s * na + a] = w - rho_s[s] * pi.prob(s, a);
        }
    }
    if !loglik.is_finite() {
        return Err(Error::NotFinite {
            context: "MaxEnt log-likelihood",
        });
    }

    let n = ns * na;
    let kernel = state_action_kernel(mdp, pi);
    let system = (DMatrix::identity(n, n) - kernel * mdp.gamma()).transpose();
    let rhs = DVector::from_vec(g);
    let z = system.lu().solve(&rhs).ok_or(Error::Singular {
        context: "MaxEnt adjoint solve",
        residual: f64::INFINITY,
    })?;
    let grad = phi.transpose_apply(z.as_slice())?;
    Ok(LoglikGrad { loglik, grad, solution })
}

fn mean_loglik(q: &StateActionFn, rho: &SaDistribution) -> f64 {
    let mut total = 0.0;
    for (s, row) in q.rows().enumerate() {
        let lse = math::logsumexp(row);
        for (a, &x) in row.iter().enumerate() {
            let w = rho.weight(s, a);
            if w > 0.0 {
                total += w * (x - lse);
            }
        }
    }
    total
}

fn initial_weights(init: WeightInit, dim: usize) -> Vec<f64> {
    match init {
        WeightInit::Zeros => vec![0.0; dim],
        WeightInit::Gaussian { seed, scale } => {
            let mut rng = rng::stream(seed, 2);
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        }
    }
}

/// Gradient ascent on the mean conditional log-likelihood. Returns the
/// iterate with the lowest loss seen.
pub fn maxent_fit(mdp: &TabularMdp, phi: &FeatureMap, data: &TransitionDataset, cfg: &MaxEntConfig) -> Result<MaxEntFit> {
    cfg.validate()?;
    let (rho, monitor) = if cfg.holdout_every > 0 && data.n() >= 2 * cfg.holdout_every {
        let k = cfg.holdout_every;
        let (fit_idx, held_idx): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|i| i % k != k - 1);
        (data.subset(&fit_idx).sa_distribution()?, Some(data.subset(&held_idx).sa_distribution()?))
    } else {
        (data.sa_distribution()?, None)
    };
    let monitored = |out: &LoglikGrad| match &monitor {
        Some(held) => -mean_loglik(&out.solution.q, held),
        None => -out.loglik,
    };
    let dim = phi.dim();
    let mut theta = initial_weights(cfg.init, dim);
    let mut m = vec![0.0; dim];
    let mut s2 = vec![0.0; dim];

    let mut loss_trace = Vec::new();
    let mut best_trace = Vec::new();
    let eval = |theta: &[f64], warm: Option<&StateActionFn>, trace: &[f64]| {
        loglik_and_grad(mdp, phi, theta, &rho, warm, cfg.inner_tol, cfg.inner_max_iter).map_err(|e| match e {
            Error::NotFinite { .. } => Error::Divergence {
                context: "MaxEnt loss",
                trace: trace.to_vec(),
            },
            other => other,
        })
    };

    let mut current = eval(&theta, None, &loss_trace)?;
    let mut best_theta = theta.clone();
    let mut best = current.clone();
    let mut best_epoch = 0;
    loss_trace.push(monitored(&current));
    best_trace.push(monitored(&current));
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut grad = current.grad.clone();
        let norm = math::sqrt(grad.iter().map(|x| x * x).sum());
        if norm > cfg.clip_norm {
            grad.iter_mut().for_each(|x| *x *= cfg.clip_norm / norm);
        }
        let step = match cfg.schedule {
            StepSchedule::Constant => cfg.step_size,
            StepSchedule::InvSqrt => cfg.step_size / math::sqrt(epoch as f64),
        };
        match cfg.optimizer {
            Optimizer::ClippedAscent => {
                theta.iter_mut().zip(&grad).for_each(|(t, g)| *t += step * g);
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = epoch as i32;
                let (c1, c2) = (1.0 - libm::pow(beta1, t as f64), 1.0 - libm::pow(beta2, t as f64));
                for i in 0..dim {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    s2[i] = beta2 * s2[i] + (1.0 - beta2) * grad[i] * grad[i];
                    theta[i] += step * (m[i] / c1) / (math::sqrt(s2[i] / c2) + eps);
                }
            }
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence {
                context: "MaxEnt weights",
                trace: loss_trace,
            });
        }
        current = eval(&theta, Some(&current.solution.v), &loss_trace)?;
        let loss = monitored(&current);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                context: "MaxEnt held-out loss",
                trace: loss_trace,
            });
        }
        loss_trace.push(loss);
        let best_loss = *best_trace.last().expect("trace starts non-empty");
        if loss < best_loss - cfg.tolerance {
            stale = 0;
        } else {
            stale += 1;
        }
        if loss < best_loss {
            best_theta.clone_from(&theta);
            best = current.clone();
            best_epoch = epoch;
        }
        best_trace.push(best_loss.min(loss));
        if stale >= cfg.patience.max(1) {
            break;
        }
    }

    let r_hat = phi.linear(&best_theta)?;
    Ok(MaxEntFit {
        theta: best_theta,
        r_hat,
        v_hat: best.solution.v,
        policy: best.solution.policy,
        loss_trace,
        best_trace,
        best_epoch,
    })
}
