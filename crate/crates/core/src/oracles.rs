//! Probabilistic-classification and regression oracles.
//!
//! Both oracles accept weighted data so that a population distribution can be
//! passed in as a weighted dataset; unit weights give the usual estimators.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::data::TransitionDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::math;
use crate::mdp::{PolicyTable, StateActionFn};

pub const DEFAULT_PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogisticSolver {
    /// First-order descent, full batch or minibatch.
    GradientDescent,
    /// Damped Newton steps with backtracking; `epochs` caps the step count.
    Newton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConfig {
    pub features: FeatureMap,
    pub solver: LogisticSolver,
    /// `None` uses `0.5 / (1 + L)` with `L` a curvature bound.
    pub step_size: Option<f64>,
    pub epochs: usize,
    /// `None` is full-batch gradient descent.
    pub batch_size: Option<usize>,
    pub l2: f64,
    /// Early stop once an epoch improves the loss by less than this.
    pub tolerance: f64,
}

impl LogisticConfig {
    pub fn new(features: FeatureMap) -> Self {
        Self {
            features,
            solver: LogisticSolver::GradientDescent,
            step_size: None,
            epochs: 500,
            batch_size: None,
            l2: 0.0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    /// `(count(s,a) + alpha) / (count(s) + alpha |A|)`.
    TabularCount { smoothing_alpha: f64 },
    /// Softmax of `<w, phi(s,a)>`, fit by gradient descent on cross-entropy.
    MultinomialLogistic(LogisticConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    /// Every fitted probability is floored here before renormalizing, so
    /// `log pi_hat >= log(prob_floor) - log(1 + |A| prob_floor)`.
    pub prob_floor: f64,
}

impl ClassifierSpec {
    pub fn tabular(smoothing_alpha: f64) -> Self {
        Self {
            kind: ClassifierKind::TabularCount { smoothing_alpha },
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }

    pub fn logistic(config: LogisticConfig) -> Self {
        Self {
            kind: ClassifierKind::MultinomialLogistic(config),
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }

    fn validate(&self, n_actions: usize) -> Result<()> {
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0 / n_actions as f64) {
            return Err(Error::InvalidArgument(alloc::format!(
                "prob_floor must lie in (0, 1/|A|), got {}",
                self.prob_floor
            )));
        }
        match &self.kind {
            ClassifierKind::TabularCount { smoothing_alpha } if !(*smoothing_alpha >= 0.0) => {
                Err(Error::InvalidArgument("smoothing alpha must be nonnegative".into()))
            }
            ClassifierKind::MultinomialLogistic(cfg) if !(cfg.l2 >= 0.0) => {
                Err(Error::InvalidArgument("l2 penalty must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedClassifier {
    pub policy: PolicyTable,
    pub prob_floor: f64,
    /// States with no training data; tabular fits give them a uniform row.
    pub unvisited_states: Vec<usize>,
    /// Weighted mean cross-entropy of the training labels under `policy`.
    pub final_loss: f64,
    pub loss_trace: Vec<f64>,
}

/// Weighted `(s, a)` counts of a dataset.
fn cell_weights(data: &TransitionDataset) -> Vec<f64> {
    let na = data.meta().n_actions;
    let mut w = vec![0.0; data.meta().n_states * na];
    for (i, t) in data.records().iter().enumerate() {
        w[t.s * na + t.a] += data.weight(i);
    }
    w
}

pub fn fit_classifier(spec: &ClassifierSpec, data: &TransitionDataset) -> Result<FittedClassifier> {
    let (ns, na) = (data.meta().n_states, data.meta().n_actions);
    spec.validate(na)?;
    let counts = cell_weights(data);
    let total: f64 = counts.iter().sum();
    if data.is_empty() || total <= 0.0 {
        return Err(Error::EmptyData { context: "classifier" });
    }
    let state_totals: Vec<f64> = counts.chunks_exact(na).map(|r| r.iter().sum()).collect();
    let unvisited_states: Vec<usize> = (0..ns).filter(|&s| state_totals[s] <= 0.0).collect();

    let (mut probs, loss_trace) = match &spec.kind {
        ClassifierKind::TabularCount { smoothing_alpha } => {
            let alpha = *smoothing_alpha;
            let mut probs = vec![0.0; ns * na];
            for s in 0..ns {
                let denom = state_totals[s] + alpha * na as f64;
                for a in 0..na {
                    probs[s * na + a] = if denom > 0.0 {
                        (counts[s * na + a] + alpha) / denom
                    } else {
                        1.0 / na as f64
                    };
                }
            }
            (probs, Vec::new())
        }
        ClassifierKind::MultinomialLogistic(cfg) => fit_logistic(cfg, data, &counts, total)?,
    };

    let floor = spec.prob_floor;
    for row in probs.chunks_exact_mut(na) {
        row.iter_mut().for_each(|p| *p = p.max(floor));
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
    }
    let policy = PolicyTable::new(ns, na, probs)?;
    let final_loss = -counts
        .iter()
        .zip(policy.probs())
        .filter(|(&c, _)| c > 0.0)
        .map(|(&c, &p)| c * math::ln(p))
        .sum::<f64>()
        / total;
    Ok(FittedClassifier {
        policy,
        prob_floor: floor,
        unvisited_states,
        final_loss,
        loss_trace,
    })
}

fn logistic_loss_grad(
    features: &FeatureMap,
    w: &[f64],
    counts: &[f64],
    total: f64,
    l2: f64,
    grad: &mut [f64],
) -> f64 {
    let (ns, na, d) = (features.n_states(), features.n_actions(), features.dim());
    grad.iter_mut().zip(w).for_each(|(g, &x)| *g = l2 * x);
    let mut loss = 0.5 * l2 * w.iter().map(|x| x * x).sum::<f64>();
    let mut logits = vec![0.0; na];
    let mut probs = vec![0.0; na];
    for s in 0..ns {
        let row = &counts[s * na..(s + 1) * na];
        let n_s: f64 = row.iter().sum();
        if n_s <= 0.0 {
            continue;
        }
        for (a, z) in logits.iter_mut().enumerate() {
            *z = features.get(s, a).iter().zip(w).map(|(x, y)| x * y).sum();
        }
        let lse = math::logsumexp(&logits);
        math::softmax_into(&logits, &mut probs);
        for a in 0..na {
            loss -= row[a] * (logits[a] - lse) / total;
            let coef = (n_s * probs[a] - row[a]) / total;
            if coef != 0.0 {
                for (g, x) in grad.iter_mut().zip(features.get(s, a)) {
                    *g += coef * x;
                }
            }
        }
    }
    debug_assert_eq!(grad.len(), d);
    loss
}

fn fit_logistic(
    cfg: &LogisticConfig,
    data: &TransitionDataset,
    counts: &[f64],
    total: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let phi = &cfg.features;
    let (ns, na) = (data.meta().n_states, data.meta().n_actions);
    if phi.n_states() != ns || phi.n_actions() != na {
        return Err(Error::shape("classifier features", ns * na, phi.n_states() * phi.n_actions()));
    }
    let d = phi.dim();
    let step = cfg.step_size.unwrap_or(0.5 / (1.0 + phi.max_sq_norm() + cfg.l2));
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("logistic step size must be positive".into()));
    }
    let mut w = vec![0.0; d];
    if cfg.solver == LogisticSolver::Newton {
        let trace = fit_logistic_newton(cfg, counts, total, &mut w)?;
        return Ok((logistic_probs(phi, &w), trace));
    }
    let mut grad = vec![0.0; d];
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let full = |w: &[f64], g: &mut [f64]| logistic_loss_grad(phi, w, counts, total, cfg.l2, g);
    let mut loss = full(&w, &mut grad);
    trace.push(loss);
    let batch = cfg.batch_size.filter(|&b| b > 0 && b < data.n());
    for _ in 0..cfg.epochs {
        match batch {
            None => {
                w.iter_mut().zip(&grad).for_each(|(x, g)| *x -= step * g);
            }
            Some(b) => {
                let mut chunk_counts = vec![0.0; ns * na];
                let mut g = vec![0.0; d];
                for start in (0..data.n()).step_by(b) {
                    let end = (start + b).min(data.n());
                    chunk_counts.iter_mut().for_each(|c| *c = 0.0);
                    let mut chunk_total = 0.0;
                    for i in start..end {
                        let t = data.records()[i];
                        chunk_counts[t.s * na + t.a] += data.weight(i);
                        chunk_total += data.weight(i);
                    }
                    if chunk_total <= 0.0 {
                        continue;
                    }
                    logistic_loss_grad(phi, &w, &chunk_counts, chunk_total, cfg.l2, &mut g);
                    w.iter_mut().zip(&g).for_each(|(x, gi)| *x -= step * gi);
                }
            }
        }
        let next = full(&w, &mut grad);
        trace.push(next);
        if !next.is_finite() {
            return Err(Error::Divergence {
                context: "logistic classifier",
                trace,
            });
        }
        let improvement = loss - next;
        loss = next;
        if improvement.abs() < cfg.tolerance {
            break;
        }
    }
    Ok((logistic_probs(phi, &w), trace))
}

fn logistic_probs(phi: &FeatureMap, w: &[f64]) -> Vec<f64> {
    let (ns, na) = (phi.n_states(), phi.n_actions());
    let mut probs = vec![0.0; ns * na];
    let mut logits = vec![0.0; na];
    for s in 0..ns {
        for (a, z) in logits.iter_mut().enumerate() {
            *z = phi.get(s, a).iter().zip(w).map(|(x, y)| x * y).sum();
        }
        math::softmax_into(&logits, &mut probs[s * na..(s + 1) * na]);
    }
    probs
}

/// Softmax features are only identified up to directions constant across
/// actions; this much ridge keeps the Newton system nonsingular.
const NEWTON_DAMPING: f64 = 1e-10;

fn fit_logistic_newton(cfg: &LogisticConfig, counts: &[f64], total: f64, w: &mut [f64]) -> Result<Vec<f64>> {
    let phi = &cfg.features;
    let (ns, na, d) = (phi.n_states(), phi.n_actions(), phi.dim());
    let mut grad = vec![0.0; d];
    let mut trial_grad = vec![0.0; d];
    let mut loss = logistic_loss_grad(phi, w, counts, total, cfg.l2, &mut grad);
    let mut trace = vec![loss];
    let mut logits = vec![0.0; na];
    let mut probs = vec![0.0; na];
    let mut mean = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for s in 0..ns {
            let n_s: f64 = counts[s * na..(s + 1) * na].iter().sum();
            if n_s <= 0.0 {
                continue;
            }
            for (a, z) in logits.iter_mut().enumerate() {
                *z = phi.get(s, a).iter().zip(w.iter()).map(|(x, y)| x * y).sum();
            }
            math::softmax_into(&logits, &mut probs);
            mean.iter_mut().for_each(|m| *m = 0.0);
            for (a, &pa) in probs.iter().enumerate() {
                for (m, x) in mean.iter_mut().zip(phi.get(s, a)) {
                    *m += pa * x;
                }
            }
            for (a, &pa) in probs.iter().enumerate() {
                let c = n_s / total * pa;
                let f = phi.get(s, a);
                for i in 0..d {
                    let di = f[i] - mean[i];
                    if di == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        hess[(i, j)] += c * di * (f[j] - mean[j]);
                    }
                }
            }
        }
        for i in 0..d {
            hess[(i, i)] += cfg.l2 + NEWTON_DAMPING;
        }
        let step = hess
            .cholesky()
            .map(|c| c.solve(&DVector::from_column_slice(&grad)))
            .ok_or(Error::Singular {
                context: "logistic Newton step",
                residual: f64::INFINITY,
            })?;
        let mut t = 1.0;
        let mut trial = vec![0.0; d];
        let next = loop {
            for i in 0..d {
                trial[i] = w[i] - t * step[i];
            }
            let l = logistic_loss_grad(phi, &trial, counts, total, cfg.l2, &mut trial_grad);
            if l <= loss || t < 1e-6 {
                break l;
            }
            t *= 0.5;
        };
        if !next.is_finite() {
            trace.push(next);
            return Err(Error::Divergence {
                context: "logistic classifier",
                trace,
            });
        }
        if next > loss {
            break;
        }
        w.copy_from_slice(&trial);
        core::mem::swap(&mut grad, &mut trial_grad);
        let improvement = loss - next;
        loss = next;
        trace.push(loss);
        if improvement < cfg.tolerance {
            break;
        }
    }
    Ok(trace)
}

/// `u_hat(s, a) = log pi_hat(a | s)`; finite because of the probability floor.
pub fn log_policy(c: &FittedClassifier) -> StateActionFn {
    c.policy.log_table().expect("floored policy has no zero entries")
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressorKind {
    /// Weighted cell average; `fallback` for cells without data.
    TabularMean { fallback: f64 },
    /// Exact weighted least squares on features with an l2 penalty `lambda`
    /// (scaled to mean-normalized weights).
    Ridge { features: FeatureMap, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSpec {
    pub kind: RegressorKind,
}

impl RegressorSpec {
    pub fn tabular(fallback: f64) -> Self {
        Self {
            kind: RegressorKind::TabularMean { fallback },
        }
    }

    pub fn ridge(features: FeatureMap, lambda: f64) -> Self {
        Self {
            kind: RegressorKind::Ridge { features, lambda },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSample {
    pub s: usize,
    pub a: usize,
    pub y: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Table,
    Linear { theta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRegressor {
    table: StateActionFn,
    model: Model,
    /// Cells with no training data.
    pub unvisited_cells: usize,
    /// Weighted root-mean-square training residual.
    pub train_rmse: f64,
}

pub fn fit_regressor(
    spec: &RegressorSpec,
    n_states: usize,
    n_actions: usize,
    samples: &[RegressionSample],
) -> Result<FittedRegressor> {
    let cells = n_states * n_actions;
    let mut cw = vec![0.0; cells];
    let mut cy = vec![0.0; cells];
    let mut total = 0.0;
    for x in samples {
        if x.s >= n_states || x.a >= n_actions {
            return Err(Error::IndexOutOfRange {
                context: "regression sample",
                index: x.s.max(x.a),
                bound: n_states.max(n_actions),
            });
        }
        if !x.y.is_finite() || !(x.w >= 0.0 && x.w.is_finite()) {
            return Err(Error::NotFinite { context: "regression target" });
        }
        cw[x.s * n_actions + x.a] += x.w;
        cy[x.s * n_actions + x.a] += x.w * x.y;
        total += x.w;
    }
    if samples.is_empty() || total <= 0.0 {
        return Err(Error::EmptyData { context: "regressor" });
    }
    let unvisited_cells = cw.iter().filter(|&&w| w <= 0.0).count();

    let (table, model) = match &spec.kind {
        RegressorKind::TabularMean { fallback } => {
            if !fallback.is_finite() {
                return Err(Error::NotFinite { context: "regression fallback" });
            }
            let values = cw
                .iter()
                .zip(&cy)
                .map(|(&w, &y)| if w > 0.0 { y / w } else { *fallback })
                .collect();
            (StateActionFn::new(n_states, n_actions, values)?, Model::Table)
        }
        RegressorKind::Ridge { features, lambda } => {
            if !(*lambda >= 0.0) {
                return Err(Error::InvalidArgument("ridge lambda must be nonnegative".into()));
            }
            if features.n_states() != n_states || features.n_actions() != n_actions {
                return Err(Error::shape("regression features", cells, features.n_states() * features.n_actions()));
            }
            let theta = ridge_solve(features, &cw, &cy, total, *lambda)?;
            (features.linear(&theta)?, Model::Linear { theta })
        }
    };
    let sse: f64 = samples
        .iter()
        .map(|x| {
            let e = table.get(x.s, x.a) - x.y;
            x.w * e * e
        })
        .sum();
    Ok(FittedRegressor {
        table,
        model,
        unvisited_cells,
        train_rmse: math::sqrt(sse / total),
    })
}

fn ridge_solve(features: &FeatureMap, cw: &[f64], cy: &[f64], total: f64, lambda: f64) -> Result<Vec<f64>> {
    let d = features.dim();
    let (ns, na) = (features.n_states(), features.n_actions());
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for s in 0..ns {
        for a in 0..na {
            let w = cw[s * na + a] / total;
            if w <= 0.0 {
                continue;
            }
            let yw = cy[s * na + a] / total;
            let phi = features.get(s, a);
            for (i, &xi) in phi.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                rhs[i] += yw * xi;
                for (j, &xj) in phi.iter().enumerate() {
                    if xj != 0.0 {
                        gram[(i, j)] += w * xi * xj;
                    }
                }
            }
        }
    }
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let scale = (0..d).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let deficient = || {
        if lambda > 0.0 {
            Error::Singular {
                context: "ridge regression",
                residual: f64::INFINITY,
            }
        } else {
            Error::RankDeficient {
                context: "ridge regression",
            }
        }
    };
    let chol = gram.cholesky().ok_or_else(deficient)?;
    let l = chol.l_dirty();
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale) {
        return Err(deficient());
    }
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

impl FittedRegressor {
    pub fn predict(&self, s: usize, a: usize) -> Result<f64> {
        if s >= self.table.n_states() {
            return Err(Error::IndexOutOfRange {
                context: "predict state",
                index: s,
                bound: self.table.n_states(),
            });
        }
        if a >= self.table.n_actions() {
            return Err(Error::IndexOutOfRange {
                context: "predict action",
                index: a,
                bound: self.table.n_actions(),
            });
        }
        Ok(self.table.get(s, a))
    }

    /// Dense table of predictions over every cell.
    pub fn predict_table(&self) -> &StateActionFn {
        &self.table
    }

    pub fn into_table(self) -> StateActionFn {
        self.table
    }

    /// Linear models only: prediction for an arbitrary feature vector.
    pub fn predict_features(&self, phi: &[f64]) -> Option<f64> {
        match &self.model {
            Model::Linear { theta } if theta.len() == phi.len() => {
                Some(theta.iter().zip(phi).map(|(w, x)| w * x).sum())
            }
            _ => None,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Linear { theta } => Some(theta),
            Model::Table => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetMeta, Transition};

    fn dataset(ns: usize, na: usize, pairs: &[(usize, usize)]) -> TransitionDataset {
        TransitionDataset::new(
            DatasetMeta {
                env: "t".into(),
                seed: 0,
                n_states: ns,
                n_actions: na,
            },
            pairs.iter().map(|&(s, a)| Transition { s, a, s_next: 0 }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tabular_frequencies() {
        let d = dataset(1, 2, &[(0, 0), (0, 0), (0, 1)]);
        let c = fit_classifier(&ClassifierSpec::tabular(0.0), &d).unwrap();
        assert!((c.policy.prob(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.policy.prob(0, 1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_smoothing_is_uniform() {
        let d = dataset(2, 3, &[(0, 0), (0, 0), (1, 2)]);
        let c = fit_classifier(&ClassifierSpec::tabular(1e12), &d).unwrap();
        assert!(c.policy.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-9));
    }

    #[test]
    fn unvisited_state_gets_uniform_row() {
        let d = dataset(3, 2, &[(0, 0), (2, 1)]);
        let c = fit_classifier(&ClassifierSpec::tabular(0.0), &d).unwrap();
        assert_eq!(c.unvisited_states, vec![1]);
        assert_eq!(c.policy.row(1), &[0.5, 0.5]);
        // Unseen actions in visited states hit the floor, not zero.
        assert!(c.policy.prob(0, 1) >= c.prob_floor / 2.0);
    }

    #[test]
    fn log_policy_examples() {
        let d = dataset(4, 5, &[(0, 0)]);
        let mut spec = ClassifierSpec::tabular(1e15);
        spec.prob_floor = 1e-6;
        let c = fit_classifier(&spec, &d).unwrap();
        let u = log_policy(&c);
        assert!(u.values().iter().all(|&x| (x + 5f64.ln()).abs() < 1e-9));
        let lse = crate::mdp::logsumexp_actions(&u);
        assert!(lse.values().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn floor_bounds_the_log_policy() {
        let d = dataset(1, 3, &[(0, 0); 10]);
        let c = fit_classifier(&ClassifierSpec::tabular(0.0), &d).unwrap();
        let u = log_policy(&c);
        let row_sum: f64 = u.row(0).iter().map(|x| x.exp()).sum();
        assert!((row_sum - 1.0).abs() < 1e-12);
        assert!(u.values().iter().all(|&x| x >= (1e-6f64).ln() - 1e-5));
    }

    #[test]
    fn classifier_rejects_bad_specs() {
        let d = dataset(1, 2, &[(0, 0)]);
        let mut spec = ClassifierSpec::tabular(0.0);
        spec.prob_floor = 0.0;
        assert!(fit_classifier(&spec, &d).is_err());
        spec.prob_floor = 0.5;
        assert!(fit_classifier(&spec, &d).is_err());
        let empty = dataset(1, 2, &[]);
        assert!(matches!(
            fit_classifier(&ClassifierSpec::tabular(0.0), &empty),
            Err(Error::EmptyData { .. })
        ));
    }

    #[test]
    fn logistic_divergence_is_reported() {
        let d = dataset(1, 2, &[(0, 0), (0, 1), (0, 1)]);
        let mut cfg = LogisticConfig::new(FeatureMap::one_hot(1, 2));
        cfg.step_size = Some(1e308);
        cfg.epochs = 50;
        match fit_classifier(&ClassifierSpec::logistic(cfg), &d) {
            Err(Error::Divergence { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn logistic_one_hot_recovers_frequencies() {
        let d = dataset(2, 2, &[(0, 0), (0, 0), (0, 0), (0, 1), (1, 1)]);
        let mut cfg = LogisticConfig::new(FeatureMap::one_hot(2, 2));
        cfg.epochs = 20_000;
        cfg.step_size = Some(2.0);
        cfg.tolerance = 0.0;
        let c = fit_classifier(&ClassifierSpec::logistic(cfg), &d).unwrap();
        assert!((c.policy.prob(0, 0) - 0.75).abs() < 1e-3);
        assert!(c.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    fn samples(pairs: &[(usize, usize, f64)]) -> Vec<RegressionSample> {
        pairs.iter().map(|&(s, a, y)| RegressionSample { s, a, y, w: 1.0 }).collect()
    }

    #[test]
    fn regression_constant_targets() {
        let xs = samples(&[(0, 0, 7.0), (0, 1, 7.0), (1, 0, 7.0), (1, 1, 7.0), (0, 0, 7.0)]);
        let tab = fit_regressor(&RegressorSpec::tabular(0.0), 2, 2, &xs).unwrap();
        assert!(tab.predict_table().values().iter().all(|&x| x == 7.0));
        let ridge = fit_regressor(&RegressorSpec::ridge(FeatureMap::one_hot(2, 2), 0.0), 2, 2, &xs).unwrap();
        assert!(ridge.predict_table().values().iter().all(|&x| (x - 7.0).abs() < 1e-12));
    }

    #[test]
    fn tabular_mean_and_fallback() {
        let xs = samples(&[(0, 1, 1.0), (0, 1, 3.0)]);
        let f = fit_regressor(&RegressorSpec::tabular(-4.0), 2, 2, &xs).unwrap();
        assert_eq!(f.predict(0, 1).unwrap(), 2.0);
        assert_eq!(f.predict(1, 0).unwrap(), -4.0);
        assert_eq!(f.unvisited_cells, 3);
        assert!(f.predict(2, 0).is_err());
        assert!(f.predict(0, 2).is_err());
    }

    #[test]
    fn unpenalized_rank_deficiency_is_an_error() {
        let xs = samples(&[(0, 0, 1.0)]);
        let spec = RegressorSpec::ridge(FeatureMap::one_hot(2, 2), 0.0);
        assert!(matches!(fit_regressor(&spec, 2, 2, &xs), Err(Error::RankDeficient { .. })));
        let spec = RegressorSpec::ridge(FeatureMap::one_hot(2, 2), 1e-3);
        assert!(fit_regressor(&spec, 2, 2, &xs).is_ok());
    }

    #[test]
    fn ridge_prediction_is_linear_in_features() {
        let phi = FeatureMap::from_fn(3, 2, 2, |s, a, x| {
            x[0] = 1.0;
            x[1] = (s * 2 + a) as f64;
        })
        .unwrap();
        let xs = samples(&[(0, 0, 1.0), (1, 1, 4.5), (2, 0, 5.0), (2, 1, 7.0)]);
        let f = fit_regressor(&RegressorSpec::ridge(phi, 0.1), 3, 2, &xs).unwrap();
        let (p1, p2) = ([1.0, 2.0], [0.5, -3.0]);
        let (al, be) = (1.7, -0.4);
        let mix = [al * p1[0] + be * p2[0], al * p1[1] + be * p2[1]];
        let lhs = f.predict_features(&mix).unwrap();
        let rhs = al * f.predict_features(&p1).unwrap() + be * f.predict_features(&p2).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
