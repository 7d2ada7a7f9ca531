//! Observed `(s, a, s')` transitions and the samplers that produce them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, SaDistribution, StateDistribution, TabularMdp};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub env: String,
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
}

/// A transition dataset. Records carry unit weight unless `weights` is set;
/// weighted datasets represent population distributions and stay in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    meta: DatasetMeta,
    records: Vec<Transition>,
    weights: Option<Vec<f64>>,
}

impl TransitionDataset {
    pub fn new(meta: DatasetMeta, records: Vec<Transition>) -> Result<Self> {
        for t in &records {
            check_index("state", t.s, meta.n_states)?;
            check_index("action", t.a, meta.n_actions)?;
            check_index("next state", t.s_next, meta.n_states)?;
        }
        Ok(Self {
            meta,
            records,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.records.len() {
            return Err(Error::shape("record weights", self.records.len(), weights.len()));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("record weights must be finite and nonnegative".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn records(&self) -> &[Transition] {
        &self.records
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Records at the given indices, keeping weights.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            meta: self.meta.clone(),
            records: idx.iter().map(|&i| self.records[i]).collect(),
            weights: self.weights.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Weighted empirical distribution of `(s, a)`.
    pub fn sa_distribution(&self) -> Result<SaDistribution> {
        let na = self.meta.n_actions;
        let mut w = vec![0.0; self.meta.n_states * na];
        for (i, t) in self.records.iter().enumerate() {
            w[t.s * na + t.a] += self.weight(i);
        }
        SaDistribution::from_weights(self.meta.n_states, na, w)
    }

    /// Weighted empirical distribution of `s`.
    pub fn state_distribution(&self) -> Result<StateDistribution> {
        let mut w = vec![0.0; self.meta.n_states];
        for (i, t) in self.records.iter().enumerate() {
            w[t.s] += self.weight(i);
        }
        StateDistribution::from_weights(w).map_err(|_| Error::EmptyData { context: "dataset" })
    }

    /// Fails on the first record whose next state is unreachable under the kernel.
    pub fn check_kernel(&self, mdp: &TabularMdp) -> Result<()> {
        if mdp.n_states() != self.meta.n_states || mdp.n_actions() != self.meta.n_actions {
            return Err(Error::shape("dataset vs MDP", mdp.n_states(), self.meta.n_states));
        }
        for (i, t) in self.records.iter().enumerate() {
            if mdp.prob(t.s, t.a, t.s_next) <= 0.0 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "record {i}: ({}, {}) -> {} has zero probability",
                    t.s,
                    t.a,
                    t.s_next
                )));
            }
        }
        Ok(())
    }
}

fn check_index(context: &'static str, index: usize, bound: usize) -> Result<()> {
    if index >= bound {
        Err(Error::IndexOutOfRange {
            context,
            index,
            bound,
        })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingRegime {
    /// After each step continue with probability `gamma`, otherwise restart
    /// from the initial distribution. Samples the discounted occupancy.
    #[default]
    DiscountedRestart,
    /// One long chain.
    Trajectory,
}

pub fn sample_transitions(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    n: usize,
    init: &StateDistribution,
    regime: SamplingRegime,
    seed: u64,
    env: &str,
) -> Result<TransitionDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions() {
        return Err(Error::shape("behavior policy", mdp.n_states() * mdp.n_actions(), pi.probs().len()));
    }
    if init.len() != mdp.n_states() {
        return Err(Error::shape("initial distribution", mdp.n_states(), init.len()));
    }
    let mut rng = rng::stream(seed, 1);
    let mut next_probs = vec![0.0; mdp.n_states()];
    let mut records = Vec::with_capacity(n);
    let mut s = rng::categorical(&mut rng, init.weights());
    for _ in 0..n {
        let a = rng::categorical(&mut rng, pi.row(s));
        next_probs.iter_mut().for_each(|p| *p = 0.0);
        for &(j, p) in mdp.successors(s, a) {
            next_probs[j] = p;
        }
        let s_next = rng::categorical(&mut rng, &next_probs);
        records.push(Transition { s, a, s_next });
        s = match regime {
            SamplingRegime::Trajectory => s_next,
            SamplingRegime::DiscountedRestart => {
                if rng.random::<f64>() < mdp.gamma() {
                    s_next
                } else {
                    rng::categorical(&mut rng, init.weights())
                }
            }
        };
    }
    TransitionDataset::new(
        DatasetMeta {
            env: env.into(),
            seed,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
        },
        records,
    )
}

/// Every positive-probability transition weighted by
/// `states(s) * pi(a|s) * P(s'|s,a)`: the population as a weighted dataset.
pub fn population_dataset(
    mdp: &TabularMdp,
    pi: &PolicyTable,
    states: &StateDistribution,
) -> Result<TransitionDataset> {
    let mut records = Vec::new();
    let mut weights = Vec::new();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let w = states[s] * pi.prob(s, a);
            if w <= 0.0 {
                continue;
            }
            for &(s_next, p) in mdp.successors(s, a) {
                records.push(Transition { s, a, s_next });
                weights.push(w * p);
            }
        }
    }
    TransitionDataset::new(
        DatasetMeta {
            env: "population".into(),
            seed: 0,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
        },
        records,
    )?
    .with_weights(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_env, expert_policy, GridworldSpec};

    #[test]
    fn deterministic_rollout_prefix() {
        let env = build_env(&GridworldSpec::easy(0)).unwrap();
        let always_right = PolicyTable::point_mass(16, 5, crate::gridworld::RIGHT).unwrap();
        let init = StateDistribution::point_mass(16, 5).unwrap();
        let d = sample_transitions(&env.mdp, &always_right, 6, &init, SamplingRegime::Trajectory, 9, "easy").unwrap();
        let states: Vec<usize> = d.records().iter().map(|t| t.s).collect();
        assert_eq!(states, vec![5, 6, 7, 4, 5, 6]);
        for t in d.records() {
            assert_eq!(t.s_next, env.spec.step(t.s, t.a));
        }
    }

    #[test]
    fn same_seed_same_dataset_and_kernel_respected() {
        let env = build_env(&GridworldSpec::ident(2)).unwrap();
        let pi = expert_policy(&env.mdp, &env.r_true).unwrap();
        let init = StateDistribution::uniform(64);
        let a = sample_transitions(&env.mdp, &pi, 2000, &init, SamplingRegime::DiscountedRestart, 4, "ident").unwrap();
        let b = sample_transitions(&env.mdp, &pi, 2000, &init, SamplingRegime::DiscountedRestart, 4, "ident").unwrap();
        assert_eq!(a, b);
        a.check_kernel(&env.mdp).unwrap();
        let c = sample_transitions(&env.mdp, &pi, 2000, &init, SamplingRegime::DiscountedRestart, 5, "ident").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_samples_rejected() {
        let env = build_env(&GridworldSpec::easy(0)).unwrap();
        let pi = PolicyTable::uniform(16, 5);
        assert!(sample_transitions(&env.mdp, &pi, 0, &StateDistribution::uniform(16), SamplingRegime::Trajectory, 0, "e").is_err());
    }

    #[test]
    fn out_of_range_records_rejected() {
        let meta = DatasetMeta {
            env: "t".into(),
            seed: 0,
            n_states: 2,
            n_actions: 2,
        };
        let bad = vec![Transition { s: 0, a: 2, s_next: 1 }];
        assert!(TransitionDataset::new(meta, bad).is_err());
    }

    #[test]
    fn population_dataset_marginals() {
        let env = build_env(&GridworldSpec::easy(1)).unwrap();
        let pi = expert_policy(&env.mdp, &env.r_true).unwrap();
        let d = population_dataset(&env.mdp, &pi, &StateDistribution::uniform(16)).unwrap();
        let sa = d.sa_distribution().unwrap();
        for s in 0..16 {
            for a in 0..5 {
                assert!((sa.weight(s, a) - pi.prob(s, a) / 16.0).abs() < 1e-15);
            }
        }
    }
}
