//! Finite MDPs, the tables that live on them, and the exact operators
//! (`P`, `mu`-expectation, log-sum-exp over actions, soft Bellman backup,
//! policy evaluation, stationary distribution) everything else is built from.
//!
//! Tables are dense and row-major by state: entry `(s, a)` of a
//! state-action table lives at `s * n_actions + a`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math;

/// Tolerance for "sums to one".
pub const PROB_TOL: f64 = 1e-12;

fn check_distribution(context: &'static str, row: usize, xs: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &x in xs {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidDistribution { context, row });
        }
        sum += x;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution { context, row });
    }
    Ok(())
}

fn check_finite(context: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NotFinite { context })
    }
}

/// A finite MDP with a known transition kernel `P(s' | s, a)` and discount.
///
/// Alongside the dense kernel the constructor builds a sparse successor list,
/// which is what the operators iterate over.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transition: Vec<f64>,
    succ_start: Vec<usize>,
    succ: Vec<(usize, f64)>,
}

impl TabularMdp {
    /// `transition` is indexed `(s, a, s')` at `(s * n_actions + a) * n_states + s'`.
    pub fn new(n_states: usize, n_actions: usize, transition: Vec<f64>, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument("MDP needs at least one state and one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(alloc::format!(
                "discount must lie in [0, 1), got {gamma}"
            )));
        }
        let cells = n_states * n_actions;
        if transition.len() != cells * n_states {
            return Err(Error::shape("transition tensor", cells * n_states, transition.len()));
        }
        let mut succ_start = Vec::with_capacity(cells + 1);
        let mut succ = Vec::new();
        for (row, probs) in transition.chunks_exact(n_states).enumerate() {
            check_distribution("transition row", row, probs)?;
            succ_start.push(succ.len());
            succ.extend(probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, &p)| (j, p)));
        }
        succ_start.push(succ.len());
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            transition,
            succ_start,
            succ,
        })
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        mut prob: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut t = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                for s2 in 0..n_states {
                    t.push(prob(s, a, s2));
                }
            }
        }
        Self::new(n_states, n_actions, t, gamma)
    }

    /// Kernel from nonnegative weights, each `(s, a)` row normalized to sum to one.
    pub fn from_weights(n_states: usize, n_actions: usize, gamma: f64, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_states * n_actions * n_states || n_states == 0 {
            return Err(Error::shape("transition weights", n_states * n_actions * n_states, weights.len()));
        }
        for (row_idx, row) in weights.chunks_exact_mut(n_states).enumerate() {
            let total: f64 = row.iter().sum();
            if !(total > 0.0 && total.is_finite()) || row.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidDistribution {
                    context: "transition weights",
                    row: row_idx,
                });
            }
            row.iter_mut().for_each(|w| *w /= total);
        }
        Self::new(n_states, n_actions, weights, gamma)
    }

    /// Deterministic kernel: action `a` in state `s` always leads to `next(s, a)`.
    pub fn deterministic(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        mut next: impl FnMut(usize, usize) -> usize,
    ) -> Result<Self> {
        let mut t = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let s2 = next(s, a);
                if s2 >= n_states {
                    return Err(Error::IndexOutOfRange {
                        context: "deterministic successor",
                        index: s2,
                        bound: n_states,
                    });
                }
                t[(s * n_actions + a) * n_states + s2] = 1.0;
            }
        }
        Self::new(n_states, n_actions, t, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), gamma)
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Next states with positive probability, with their probabilities.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        let row = s * self.n_actions + a;
        &self.succ[self.succ_start[row]..self.succ_start[row + 1]]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    fn check_sa(&self, context: &'static str, f: &StateActionFn) -> Result<()> {
        if f.n_states != self.n_states {
            return Err(Error::shape(context, self.n_states, f.n_states));
        }
        if f.n_actions != self.n_actions {
            return Err(Error::shape(context, self.n_actions, f.n_actions));
        }
        Ok(())
    }

    fn check_s(&self, context: &'static str, len: usize) -> Result<()> {
        if len != self.n_states {
            return Err(Error::shape(context, self.n_states, len));
        }
        Ok(())
    }

    fn check_policy(&self, context: &'static str, p: &PolicyTable) -> Result<()> {
        if p.n_states != self.n_states {
            return Err(Error::shape(context, self.n_states, p.n_states));
        }
        if p.n_actions != self.n_actions {
            return Err(Error::shape(context, self.n_actions, p.n_actions));
        }
        Ok(())
    }
}

/// A real table `f(s, a)`: rewards, soft values, log-policies, Q-functions.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionFn {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl StateActionFn {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::shape("state-action table", n_states * n_actions, values.len()));
        }
        check_finite("state-action table", &values)?;
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![c; n_states * n_actions],
        }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                values.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, x: f64) {
        self.values[s * self.n_actions + a] = x;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.n_actions)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n_states != other.n_states {
            return Err(Error::shape("state-action table", self.n_states, other.n_states));
        }
        if self.n_actions != other.n_actions {
            return Err(Error::shape("state-action table", self.n_actions, other.n_actions));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Entrywise `f(self, other)`.
    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.values.iter().zip(&other.values).map(|(&x, &y)| f(x, y)).collect(),
        })
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        self.zip_with(other, |x, y| x + scale * y)
    }

    /// Adds the state function `c(s)` to every action of row `s`.
    pub fn add_state_fn(&self, c: &StateFn) -> Result<Self> {
        if c.len() != self.n_states {
            return Err(Error::shape("state potential", self.n_states, c.len()));
        }
        Ok(Self::from_fn(self.n_states, self.n_actions, |s, a| self.get(s, a) + c[s]))
    }

    pub fn sup_norm(&self) -> f64 {
        math::sup_abs(&self.values)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(math::max_abs_diff(&self.values, &other.values))
    }
}

impl Index<(usize, usize)> for StateActionFn {
    type Output = f64;

    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.values[s * self.n_actions + a]
    }
}

/// A real vector over states: potentials and log-partition outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFn {
    values: Vec<f64>,
}

impl StateFn {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("state function", &values)?;
        Ok(Self { values })
    }

    pub fn constant(n_states: usize, c: f64) -> Self {
        Self {
            values: vec![c; n_states],
        }
    }

    pub fn from_fn(n_states: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            values: (0..n_states).map(f).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        math::sup_abs(&self.values)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::shape("state function", self.len(), other.len()));
        }
        Ok(math::max_abs_diff(&self.values, &other.values))
    }
}

impl Index<usize> for StateFn {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.values[s]
    }
}

/// A conditional distribution `p(a | s)`: behavior policies, their
/// estimates, and normalization measures.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::InvalidArgument("policy needs at least one action".into()));
        }
        if probs.len() != n_states * n_actions {
            return Err(Error::shape("policy table", n_states * n_actions, probs.len()));
        }
        for (s, row) in probs.chunks_exact(n_actions).enumerate() {
            check_distribution("policy row", s, row)?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Normalizes each row of nonnegative weights.
    pub fn from_weights(n_states: usize, n_actions: usize, mut weights: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || weights.len() != n_states * n_actions {
            return Err(Error::shape("policy weights", n_states * n_actions, weights.len()));
        }
        for (s, row) in weights.chunks_exact_mut(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0 && sum.is_finite()) || row.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidDistribution {
                    context: "policy weights",
                    row: s,
                });
            }
            row.iter_mut().for_each(|w| *w /= sum);
        }
        Self::new(n_states, n_actions, weights)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn point_mass(n_states: usize, n_actions: usize, action: usize) -> Result<Self> {
        if action >= n_actions {
            return Err(Error::IndexOutOfRange {
                context: "point-mass action",
                index: action,
                bound: n_actions,
            });
        }
        Ok(Self::from_rows_fn(n_states, n_actions, |_, a| if a == action { 1.0 } else { 0.0 }))
    }

    fn from_rows_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                probs.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    /// Row-wise softmax of `logits`.
    pub fn softmax(logits: &StateActionFn) -> Self {
        let mut probs = vec![0.0; logits.values.len()];
        for (out, row) in probs.chunks_exact_mut(logits.n_actions).zip(logits.rows()) {
            math::softmax_into(row, out);
        }
        Self {
            n_states: logits.n_states,
            n_actions: logits.n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Entrywise log. Fails on a zero entry.
    pub fn log_table(&self) -> Result<StateActionFn> {
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                return Err(Error::ZeroProbability {
                    state: i / self.n_actions,
                    action: i % self.n_actions,
                });
            }
        }
        Ok(StateActionFn {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.probs.iter().map(|&p| math::ln(p)).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::shape("policy table", self.probs.len(), other.probs.len()));
        }
        Ok(math::max_abs_diff(&self.probs, &other.probs))
    }
}

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    weights: Vec<f64>,
}

impl StateDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_distribution("state distribution", 0, &weights)?;
        Ok(Self { weights })
    }

    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidDistribution {
                context: "state weights",
                row: 0,
            });
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn uniform(n_states: usize) -> Self {
        Self {
            weights: vec![1.0 / n_states as f64; n_states],
        }
    }

    pub fn point_mass(n_states: usize, s: usize) -> Result<Self> {
        if s >= n_states {
            return Err(Error::IndexOutOfRange {
                context: "point-mass state",
                index: s,
                bound: n_states,
            });
        }
        let mut weights = vec![0.0; n_states];
        weights[s] = 1.0;
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Index<usize> for StateDistribution {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.weights[s]
    }
}

/// A joint distribution over `(s, a)` pairs, e.g. the empirical frequencies of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SaDistribution {
    n_states: usize,
    n_actions: usize,
    weights: Vec<f64>,
}

impl SaDistribution {
    /// Normalizes nonnegative weights; all-zero weights are an empty-data error.
    pub fn from_weights(n_states: usize, n_actions: usize, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_states * n_actions {
            return Err(Error::shape("state-action weights", n_states * n_actions, weights.len()));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidDistribution {
                context: "state-action weights",
                row: 0,
            });
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::EmptyData {
                context: "state-action weights",
            });
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self {
            n_states,
            n_actions,
            weights,
        })
    }

    /// `lambda(s) * pi(a | s)`.
    pub fn product(states: &StateDistribution, policy: &PolicyTable) -> Result<Self> {
        if states.len() != policy.n_states {
            return Err(Error::shape("state distribution", policy.n_states, states.len()));
        }
        let w = (0..policy.n_states)
            .flat_map(|s| policy.row(s).iter().map(move |&p| states[s] * p))
            .collect();
        Self::from_weights(policy.n_states, policy.n_actions, w)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn weight(&self, s: usize, a: usize) -> f64 {
        self.weights[s * self.n_actions + a]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.weights.chunks_exact(self.n_actions).map(|r| r.iter().sum()).collect()
    }
}

/// `(P f)(s, a) = sum_{s'} P(s' | s, a) f(s')`.
pub fn apply_p(mdp: &TabularMdp, f: &StateFn) -> Result<StateActionFn> {
    mdp.check_s("apply_p input", f.len())?;
    Ok(StateActionFn::from_fn(mdp.n_states, mdp.n_actions, |s, a| {
        mdp.successors(s, a).iter().map(|&(j, p)| p * f[j]).sum()
    }))
}

/// `(mu f)(s) = sum_a mu(a | s) f(s, a)`.
pub fn expect_mu(mu: &PolicyTable, f: &StateActionFn) -> Result<StateFn> {
    if mu.n_states != f.n_states {
        return Err(Error::shape("expect_mu", mu.n_states, f.n_states));
    }
    if mu.n_actions != f.n_actions {
        return Err(Error::shape("expect_mu", mu.n_actions, f.n_actions));
    }
    Ok(StateFn {
        values: f
            .rows()
            .enumerate()
            .map(|(s, row)| mu.row(s).iter().zip(row).map(|(m, x)| m * x).sum())
            .collect(),
    })
}

/// `(Xi f)(s) = log sum_a exp f(s, a)`.
pub fn logsumexp_actions(f: &StateActionFn) -> StateFn {
    StateFn {
        values: f.rows().map(math::logsumexp).collect(),
    }
}

/// One soft Bellman backup `P Xi(r + gamma v)`.
pub fn soft_bellman_step(mdp: &TabularMdp, r: &StateActionFn, v: &StateActionFn) -> Result<StateActionFn> {
    mdp.check_sa("reward", r)?;
    mdp.check_sa("soft value", v)?;
    let q = r.add_scaled(v, mdp.gamma)?;
    apply_p(mdp, &logsumexp_actions(&q))
}

/// `v - P Xi(r + gamma v)`; identically zero iff `(r, v)` is feasible.
pub fn soft_bellman_residual(mdp: &TabularMdp, r: &StateActionFn, v: &StateActionFn) -> Result<StateActionFn> {
    let next = soft_bellman_step(mdp, r, v)?;
    v.add_scaled(&next, -1.0)
}

/// Fixed point of the soft Bellman equation with its Q-function and softmax policy.
#[derive(Debug, Clone)]
pub struct SoftValueSolution {
    pub v: StateActionFn,
    pub q: StateActionFn,
    pub policy: PolicyTable,
    pub iterations: usize,
    /// Sup-norm soft Bellman residual of `v`.
    pub residual: f64,
}

pub fn soft_value_iteration(
    mdp: &TabularMdp,
    r: &StateActionFn,
    tol: f64,
    max_iter: usize,
) -> Result<SoftValueSolution> {
    soft_value_iteration_from(mdp, r, StateActionFn::zeros(mdp.n_states, mdp.n_actions), tol, max_iter)
}

/// Soft value iteration warm-started at `v0`.
pub fn soft_value_iteration_from(
    mdp: &TabularMdp,
    r: &StateActionFn,
    v0: StateActionFn,
    tol: f64,
    max_iter: usize,
) -> Result<SoftValueSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("soft value iteration tolerance must be positive".into()));
    }
    mdp.check_sa("initial soft value", &v0)?;
    let mut v = v0;
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let next = soft_bellman_step(mdp, r, &v)?;
        residual = v.max_abs_diff(&next)?;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let q = r.add_scaled(&v, mdp.gamma)?;
            let policy = PolicyTable::softmax(&q);
            return Ok(SoftValueSolution {
                v,
                q,
                policy,
                iterations: it,
                residual,
            });
        }
        v = next;
    }
    Err(Error::NoConvergence {
        context: "soft value iteration",
        iterations: max_iter,
        residual,
        hint: "",
    })
}

/// The dense matrix `M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s')` of the state-action chain.
pub(crate) fn state_action_kernel(mdp: &TabularMdp, pi: &PolicyTable) -> DMatrix<f64> {
    let n = mdp.n_states * mdp.n_actions;
    let na = mdp.n_actions;
    let mut m = DMatrix::zeros(n, n);
    for s in 0..mdp.n_states {
        for a in 0..na {
            for &(s2, p) in mdp.successors(s, a) {
                for a2 in 0..na {
                    m[(s * na + a, s2 * na + a2)] += p * pi.prob(s2, a2);
                }
            }
        }
    }
    m
}

/// `Q^{pi}_r = r + gamma P pi Q^{pi}_r`, by a dense linear solve.
pub fn policy_q(mdp: &TabularMdp, r: &StateActionFn, pi: &PolicyTable) -> Result<StateActionFn> {
    mdp.check_sa("reward", r)?;
    mdp.check_policy("evaluated policy", pi)?;
    let n = mdp.n_states * mdp.n_actions;
    let m = state_action_kernel(mdp, pi);
    let a = DMatrix::identity(n, n) - &m * mdp.gamma;
    let b = DVector::from_column_slice(r.values());
    let x = a.lu().solve(&b).ok_or(Error::Singular {
        context: "policy evaluation",
        residual: f64::INFINITY,
    })?;
    let resid = (&b - (DMatrix::identity(n, n) - m * mdp.gamma) * &x).amax();
    if !(resid <= 1e-9 * x.amax().max(1.0)) {
        return Err(Error::Singular {
            context: "policy evaluation",
            residual: resid,
        });
    }
    StateActionFn::new(mdp.n_states, mdp.n_actions, x.as_slice().to_vec())
}

/// `V^{pi}_r = pi Q^{pi}_r`.
pub fn policy_value(mdp: &TabularMdp, r: &StateActionFn, pi: &PolicyTable) -> Result<StateFn> {
    expect_mu(pi, &policy_q(mdp, r, pi)?)
}

pub const STATIONARY_MAX_ITER: usize = 100_000;

/// Stationary distribution `lambda P mu = lambda` of the state chain
/// `s -> a ~ mu(.|s) -> s' ~ P(.|s,a)`, by power iteration from uniform.
pub fn stationary_distribution(mdp: &TabularMdp, mu: &PolicyTable, tol: f64) -> Result<StateDistribution> {
    mdp.check_policy("stationary measure", mu)?;
    let ns = mdp.n_states;
    let mut lambda = vec![1.0 / ns as f64; ns];
    let mut next = vec![0.0; ns];
    let mut residual = f64::INFINITY;
    for _ in 0..STATIONARY_MAX_ITER {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, &ls) in lambda.iter().enumerate() {
            if ls == 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions {
                let w = ls * mu.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for &(s2, p) in mdp.successors(s, a) {
                    next[s2] += w * p;
                }
            }
        }
        // Renormalize against rounding drift.
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        residual = math::max_abs_diff(&lambda, &next);
        core::mem::swap(&mut lambda, &mut next);
        if residual <= tol {
            return StateDistribution::from_weights(lambda);
        }
    }
    Err(Error::NoConvergence {
        context: "stationary distribution",
        iterations: STATIONARY_MAX_ITER,
        residual,
        hint: "the chain may be periodic or reducible; mix in a stay or restart probability",
    })
}

/// Mean over `(s, a) ~ weights` of `r + gamma v - Xi(r + gamma v)(s)`.
pub fn conditional_loglik(
    mdp: &TabularMdp,
    weights: &SaDistribution,
    r: &StateActionFn,
    v: &StateActionFn,
) -> Result<f64> {
    mdp.check_sa("reward", r)?;
    mdp.check_sa("soft value", v)?;
    if weights.n_states != mdp.n_states || weights.n_actions != mdp.n_actions {
        return Err(Error::shape("likelihood weights", mdp.n_states * mdp.n_actions, weights.weights.len()));
    }
    let q = r.add_scaled(v, mdp.gamma)?;
    let mut total = 0.0;
    for (s, row) in q.rows().enumerate() {
        let lse = math::logsumexp(row);
        for (a, &x) in row.iter().enumerate() {
            let w = weights.weight(s, a);
            if w > 0.0 {
                total += w * (x - lse);
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NotFinite {
            context: "conditional log-likelihood",
        });
    }
    Ok(total)
}

/// `(sum_{s,a} w(s,a) f(s,a)^2)^{1/2}`, the norm under the data distribution.
pub fn weighted_l2_norm(f: &StateActionFn, weights: &SaDistribution) -> Result<f64> {
    if f.values.len() != weights.weights.len() {
        return Err(Error::shape("weighted norm", weights.weights.len(), f.values.len()));
    }
    let ss: f64 = f.values.iter().zip(&weights.weights).map(|(x, w)| w * x * x).sum();
    Ok(math::sqrt(ss))
}

/// Norm under `lambda (x) mu`.
pub fn lambda_mu_norm(f: &StateActionFn, lambda: &StateDistribution, mu: &PolicyTable) -> Result<f64> {
    weighted_l2_norm(f, &SaDistribution::product(lambda, mu)?)
}

/// Norm of a state function under `lambda`.
pub fn lambda_norm(c: &StateFn, lambda: &StateDistribution) -> Result<f64> {
    if c.len() != lambda.len() {
        return Err(Error::shape("lambda norm", lambda.len(), c.len()));
    }
    Ok(math::sqrt(c.values.iter().zip(lambda.weights()).map(|(x, w)| w * x * x).sum()))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toggle(gamma: f64) -> TabularMdp {
        TabularMdp::deterministic(2, 2, gamma, |s, a| if a == 0 { s } else { 1 - s }).unwrap()
    }

    #[test]
    fn rejects_bad_kernels() {
        assert!(TabularMdp::new(1, 1, vec![0.5], 0.5).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], 1.0).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0, 0.0], 0.5).is_err());
        assert!(TabularMdp::new(2, 1, vec![1.2, -0.2, 0.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn apply_p_reads_off_deterministic_kernel() {
        let mdp = toggle(0.5);
        let f = StateFn::new(vec![0.0, 1.0]).unwrap();
        let pf = apply_p(&mdp, &f).unwrap();
        assert_eq!(pf.row(0), &[0.0, 1.0]);
        assert_eq!(pf.row(1), &[1.0, 0.0]);
        assert!(apply_p(&mdp, &StateFn::constant(3, 1.0)).is_err());
    }

    #[test]
    fn expect_mu_examples() {
        let f = StateActionFn::constant(3, 2, 3.0);
        let mu = PolicyTable::uniform(3, 2);
        assert!(expect_mu(&mu, &f).unwrap().values().iter().all(|&x| (x - 3.0).abs() < 1e-15));

        let g = StateActionFn::from_fn(2, 3, |s, a| (10 * s + a) as f64);
        let pm = PolicyTable::point_mass(2, 3, 0).unwrap();
        assert_eq!(expect_mu(&pm, &g).unwrap().values(), &[0.0, 10.0]);

        let h = StateActionFn::from_fn(1, 2, |_, a| if a == 0 { 0.8f64.ln() } else { 0.2f64.ln() });
        let m = expect_mu(&PolicyTable::uniform(1, 2), &h).unwrap();
        assert!((m[0] - (-0.916_290_731_874_155)).abs() < 1e-12);
        assert!(expect_mu(&PolicyTable::uniform(1, 3), &h).is_err());
    }

    #[test]
    fn logsumexp_examples() {
        let z = StateActionFn::zeros(2, 4);
        for x in logsumexp_actions(&z).values() {
            assert!((x - 4f64.ln()).abs() < 1e-15);
        }
        let big = StateActionFn::constant(1, 2, 1000.0);
        let x = logsumexp_actions(&big)[0];
        assert!(x.is_finite());
        assert!((x - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let logp = PolicyTable::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap().log_table().unwrap();
        assert!(logsumexp_actions(&logp)[0].abs() < 1e-15);
    }

    #[test]
    fn perturbed_feasible_value_has_residual_in_contraction_band() {
        let gamma = 0.7;
        let mdp = toggle(gamma);
        let pi = PolicyTable::new(2, 2, vec![0.3, 0.7, 0.6, 0.4]).unwrap();
        let r = pi.log_table().unwrap();
        let mut v = StateActionFn::zeros(2, 2);
        v.set(1, 0, 1.0);
        let res = soft_bellman_residual(&mdp, &r, &v).unwrap();
        let x = res.get(1, 0);
        assert!(x >= 1.0 - gamma - 1e-12 && x <= 1.0 + 1e-12, "{x}");
    }

    #[test]
    fn soft_vi_zero_reward_is_uniform() {
        let gamma = 0.9;
        let mdp = toggle(gamma);
        let sol = soft_value_iteration(&mdp, &StateActionFn::zeros(2, 2), 1e-12, 10_000).unwrap();
        // v = P Xi(gamma v) = log 2 + gamma v.
        let expect = 2f64.ln() / (1.0 - gamma);
        for &x in sol.v.values() {
            assert!((x - expect).abs() < 1e-10);
        }
        for &p in sol.policy.probs() {
            assert!((p - 0.5).abs() < 1e-12);
        }
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn soft_vi_reports_non_convergence() {
        let mdp = toggle(0.99);
        let r = StateActionFn::from_fn(2, 2, |s, a| (s + a) as f64);
        match soft_value_iteration(&mdp, &r, 1e-12, 3) {
            Err(Error::NoConvergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn policy_q_toggle_matches_power_series() {
        let gamma = 0.5;
        let mdp = toggle(gamma);
        let r = StateActionFn::from_fn(2, 2, |s, _| if s == 1 { 1.0 } else { 0.0 });
        let always_toggle = PolicyTable::point_mass(2, 2, 1).unwrap();
        let q = policy_q(&mdp, &r, &always_toggle).unwrap();
        // Rollout oracle: 60 terms of sum_t gamma^t r(s_t, a_t).
        for s0 in 0..2 {
            for a0 in 0..2 {
                let mut total = r.get(s0, a0);
                let mut s = if a0 == 0 { s0 } else { 1 - s0 };
                let mut disc = 1.0;
                for _ in 1..60 {
                    disc *= gamma;
                    total += disc * r.get(s, 1);
                    s = 1 - s;
                }
                assert!((q.get(s0, a0) - total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn policy_q_trivial_cases() {
        let mdp = toggle(0.0);
        let r = StateActionFn::from_fn(2, 2, |s, a| (s * 2 + a) as f64);
        let pi = PolicyTable::uniform(2, 2);
        assert!(policy_q(&mdp, &r, &pi).unwrap().max_abs_diff(&r).unwrap() < 1e-15);
        let v = policy_value(&mdp, &StateActionFn::constant(2, 2, 2.5), &pi).unwrap();
        assert!(v.values().iter().all(|&x| (x - 2.5).abs() < 1e-14));

        let mdp = toggle(0.8);
        let q = policy_q(&mdp, &StateActionFn::constant(2, 2, 1.0), &pi).unwrap();
        assert!(q.values().iter().all(|&x| (x - 5.0).abs() < 1e-12));
    }

    #[test]
    fn stationary_examples() {
        let mdp = toggle(0.5);
        let lam = stationary_distribution(&mdp, &PolicyTable::uniform(2, 2), 1e-12).unwrap();
        assert!((lam[0] - 0.5).abs() < 1e-12);

        // State 0 moves to the absorbing state 1 under every action.
        let absorbing = TabularMdp::deterministic(2, 2, 0.5, |_, _| 1).unwrap();
        let lam = stationary_distribution(&absorbing, &PolicyTable::uniform(2, 2), 1e-12).unwrap();
        assert!((lam[1] - 1.0).abs() < 1e-12);

        // Periodic, but uniform is already stationary.
        let cycle = TabularMdp::deterministic(3, 1, 0.5, |s, _| (s + 1) % 3).unwrap();
        let lam = stationary_distribution(&cycle, &PolicyTable::uniform(3, 1), 1e-12).unwrap();
        assert!((lam[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_reports_periodic_chain() {
        // Two-state flip with a transient third state: period 2 from uniform start.
        let mdp = TabularMdp::deterministic(3, 1, 0.5, |s, _| match s {
            0 => 1,
            1 => 0,
            _ => 0,
        })
        .unwrap();
        let err = stationary_distribution(&mdp, &PolicyTable::uniform(3, 1), 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
        assert!(alloc::format!("{err}").contains("periodic"));
    }

    #[test]
    fn loglik_of_trivial_solution_is_negative_entropy() {
        let mdp = toggle(0.6);
        let pi = PolicyTable::new(2, 2, vec![0.9, 0.1, 0.35, 0.65]).unwrap();
        let w = SaDistribution::product(&StateDistribution::new(vec![0.25, 0.75]).unwrap(), &pi).unwrap();
        let ll = conditional_loglik(&mdp, &w, &pi.log_table().unwrap(), &StateActionFn::zeros(2, 2)).unwrap();
        let ent = |p: &[f64]| -p.iter().map(|x| x * x.ln()).sum::<f64>();
        let expect = -(0.25 * ent(pi.row(0)) + 0.75 * ent(pi.row(1)));
        assert!((ll - expect).abs() < 1e-14);

        let u = PolicyTable::uniform(2, 2);
        let w = SaDistribution::product(&StateDistribution::uniform(2), &u).unwrap();
        let ll = conditional_loglik(&mdp, &w, &u.log_table().unwrap(), &StateActionFn::zeros(2, 2)).unwrap();
        assert!((ll + 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn empty_weights_are_rejected() {
        assert!(matches!(
            SaDistribution::from_weights(1, 2, vec![0.0, 0.0]),
            Err(Error::EmptyData { .. })
        ));
    }

    #[test]
    fn log_table_rejects_zero() {
        let p = PolicyTable::point_mass(1, 2, 0).unwrap();
        assert_eq!(p.log_table().unwrap_err(), Error::ZeroProbability { state: 0, action: 1 });
    }
}
