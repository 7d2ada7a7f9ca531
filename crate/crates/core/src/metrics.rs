//! Reward-recovery and imitation metrics.
//!
//! Rewards are compared through Q-differences `Q(s,a) - Q(s,ref)`, which do
//! not change under potential shaping. Policies are compared through the
//! softmax of the estimated Q against the expert policy.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::mdp::{soft_value_iteration, StateActionFn, StateDistribution, TabularMdp};

/// `Q(s,a) - Q(s, ref_action)`.
pub fn qdiff(q: &StateActionFn, ref_action: usize) -> Result<StateActionFn> {
    if ref_action >= q.n_actions() {
        return Err(Error::IndexOutOfRange {
            context: "reference action",
            index: ref_action,
            bound: q.n_actions(),
        });
    }
    Ok(StateActionFn::from_fn(q.n_states(), q.n_actions(), |s, a| q.get(s, a) - q.get(s, ref_action)))
}

/// Ground truth: the soft-optimal Q of the true reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub q: StateActionFn,
}

impl Truth {
    pub fn from_reward(mdp: &TabularMdp, r_true: &StateActionFn, tol: f64, max_iter: usize) -> Result<Self> {
        Ok(Self {
            q: soft_value_iteration(mdp, r_true, tol, max_iter)?.q,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse_qdiff: f64,
    /// `None` when either Q-difference vector has zero variance.
    pub corr_qdiff: Option<f64>,
    pub kl: f64,
    pub tv: f64,
    pub top1: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["rmse", "corr", "kl", "tv", "top1"];

    /// Values in [`Metrics::NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 5] {
        [Some(self.rmse_qdiff), self.corr_qdiff, Some(self.kl), Some(self.tv), Some(self.top1)]
    }
}

fn log_softmax_row(row: &[f64], out: &mut Vec<f64>) {
    let lse = math::logsumexp(row);
    out.clear();
    out.extend(row.iter().map(|x| x - lse));
}

/// Compares `q_hat` with the truth, weighting states by `weighting`.
///
/// RMSE and correlation run over `(s, a)` with `a != ref_action`, each state
/// weighted by `weighting(s)`. KL, TV and top-1 compare the expert policy
/// with `softmax(q_hat)`; top-1 breaks ties toward the lowest action index.
pub fn evaluate(truth: &Truth, q_hat: &StateActionFn, weighting: &StateDistribution, ref_action: usize) -> Result<Metrics> {
    truth.q.same_shape(q_hat)?;
    let (ns, na) = (q_hat.n_states(), q_hat.n_actions());
    if weighting.len() != ns {
        return Err(Error::shape("state weighting", ns, weighting.len()));
    }
    let d_true = qdiff(&truth.q, ref_action)?;
    let d_hat = qdiff(q_hat, ref_action)?;

    let per_cell = if na > 1 { 1.0 / (na - 1) as f64 } else { 0.0 };
    let (mut sw, mut mx, mut my) = (0.0, 0.0, 0.0);
    let mut sq = 0.0;
    for s in 0..ns {
        for a in (0..na).filter(|&a| a != ref_action) {
            let w = weighting[s] * per_cell;
            let (x, y) = (d_true.get(s, a), d_hat.get(s, a));
            sw += w;
            mx += w * x;
            my += w * y;
            sq += w * (x - y) * (x - y);
        }
    }
    let rmse_qdiff = if sw > 0.0 { math::sqrt(sq / sw) } else { 0.0 };
    let corr_qdiff = if sw > 0.0 {
        let (mx, my) = (mx / sw, my / sw);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for s in 0..ns {
            for a in (0..na).filter(|&a| a != ref_action) {
                let w = weighting[s] * per_cell;
                let (x, y) = (d_true.get(s, a) - mx, d_hat.get(s, a) - my);
                sxx += w * x * x;
                syy += w * y * y;
                sxy += w * x * y;
            }
        }
        if sxx > 0.0 && syy > 0.0 {
            Some((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
        } else {
            None
        }
    } else {
        None
    };

    let (mut kl, mut tv, mut top1) = (0.0, 0.0, 0.0);
    let (mut lp, mut lq) = (Vec::with_capacity(na), Vec::with_capacity(na));
    for s in 0..ns {
        let w = weighting[s];
        log_softmax_row(truth.q.row(s), &mut lp);
        log_softmax_row(q_hat.row(s), &mut lq);
        let mut kl_s = 0.0;
        let mut tv_s = 0.0;
        for a in 0..na {
            let p = math::exp(lp[a]);
            if p > 0.0 {
                kl_s += p * (lp[a] - lq[a]);
            }
            tv_s += (p - math::exp(lq[a])).abs();
        }
        kl += w * kl_s.max(0.0);
        tv += w * 0.5 * tv_s;
        if math::argmax(truth.q.row(s)) == math::argmax(q_hat.row(s)) {
            top1 += w;
        }
    }
    Ok(Metrics {
        rmse_qdiff,
        corr_qdiff,
        kl: kl.max(0.0),
        tv: tv.clamp(0.0, 1.0),
        top1: top1.clamp(0.0, 1.0),
    })
}

/// Mean and standard error (sample standard deviation over `sqrt(R)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// `None` with fewer than two values.
    pub se: Option<f64>,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = (n > 1).then(|| {
        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        math::sqrt(var) / math::sqrt(n as f64)
    });
    Some(Summary { mean, se, count: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StateFn;

    #[test]
    fn qdiff_examples() {
        let q = StateActionFn::new(1, 3, alloc::vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(qdiff(&q, 0).unwrap().values(), &[0.0, 2.0, 1.0]);
        assert!(qdiff(&StateActionFn::constant(3, 2, 4.0), 1).unwrap().sup_norm() == 0.0);
        assert!(qdiff(&q, 3).is_err());
    }

    #[test]
    fn perfect_estimate() {
        let q = StateActionFn::from_fn(3, 3, |s, a| (s as f64 - a as f64 * 0.7).sin());
        let truth = Truth { q: q.clone() };
        let shifted = q.add_state_fn(&StateFn::new(alloc::vec![3.0, -1.0, 0.5]).unwrap()).unwrap();
        let m = evaluate(&truth, &shifted, &StateDistribution::uniform(3), 0).unwrap();
        assert!(m.rmse_qdiff < 1e-12);
        assert!((m.corr_qdiff.unwrap() - 1.0).abs() < 1e-12);
        assert!(m.kl < 1e-12 && m.tv < 1e-12);
        assert_eq!(m.top1, 1.0);
    }

    #[test]
    fn constant_estimate_has_no_correlation() {
        let q = StateActionFn::from_fn(2, 3, |s, a| (s * a) as f64);
        let m = evaluate(&Truth { q }, &StateActionFn::zeros(2, 3), &StateDistribution::uniform(2), 0).unwrap();
        assert_eq!(m.corr_qdiff, None);
        // Row 0 of the truth is all ties; the lowest index wins on both sides.
        assert_eq!(m.top1, 0.5);
    }

    #[test]
    fn hand_computed_two_action_metrics() {
        // One state, truth logits (0, ln 3): expert (0.25, 0.75); estimate uniform.
        let truth = Truth {
            q: StateActionFn::new(1, 2, alloc::vec![0.0, 3f64.ln()]).unwrap(),
        };
        let est = StateActionFn::zeros(1, 2);
        let m = evaluate(&truth, &est, &StateDistribution::uniform(1), 0).unwrap();
        let kl = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
        assert!((m.kl - kl).abs() < 1e-14);
        assert!((m.tv - 0.25).abs() < 1e-14);
        assert!((m.rmse_qdiff - 3f64.ln()).abs() < 1e-14);
        assert_eq!(m.top1, 0.0);
    }

    #[test]
    fn summary_standard_error() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.se.unwrap() - sd / 2.0).abs() < 1e-15);
        assert_eq!(summarize(&[7.0]).unwrap().se, None);
        assert!(summarize(&[]).is_none());
    }
}
