use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mdp::{StateActionFn, TabularMdp};

/// A fixed-dimension feature vector `phi(s, a)` for every state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(n_states: usize, n_actions: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if values.len() != n_states * n_actions * dim {
            return Err(Error::shape("feature table", n_states * n_actions * dim, values.len()));
        }
        if !values.iter().all(|x| x.is_finite()) {
            return Err(Error::NotFinite { context: "feature table" });
        }
        Ok(Self {
            n_states,
            n_actions,
            dim,
            values,
        })
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        dim: usize,
        mut fill: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut values = vec![0.0; n_states * n_actions * dim];
        for s in 0..n_states {
            for a in 0..n_actions {
                let at = (s * n_actions + a) * dim;
                fill(s, a, &mut values[at..at + dim]);
            }
        }
        Self::new(n_states, n_actions, dim, values)
    }

    /// One indicator per state-action cell.
    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        let dim = n_states * n_actions;
        let mut values = vec![0.0; dim * dim];
        for i in 0..dim {
            values[i * dim + i] = 1.0;
        }
        Self {
            n_states,
            n_actions,
            dim,
            values,
        }
    }

    /// Successor-state distribution `P(.|s,a)` followed by an action
    /// indicator. Softmax policies whose Q splits into a function of the next
    /// state plus an action term are linear in these.
    pub fn successor_indicators(mdp: &TabularMdp) -> Self {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let dim = ns + na;
        let mut values = vec![0.0; ns * na * dim];
        for s in 0..ns {
            for a in 0..na {
                let row = &mut values[(s * na + a) * dim..(s * na + a + 1) * dim];
                for &(s2, p) in mdp.successors(s, a) {
                    row[s2] = p;
                }
                row[ns + a] = 1.0;
            }
        }
        Self {
            n_states: ns,
            n_actions: na,
            dim,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, s: usize, a: usize) -> &[f64] {
        let at = (s * self.n_actions + a) * self.dim;
        &self.values[at..at + self.dim]
    }

    /// `<theta, phi(s, a)>` for every cell.
    pub fn linear(&self, theta: &[f64]) -> Result<StateActionFn> {
        if theta.len() != self.dim {
            return Err(Error::shape("weight vector", self.dim, theta.len()));
        }
        let values = self
            .values
            .chunks_exact(self.dim)
            .map(|phi| phi.iter().zip(theta).map(|(x, w)| x * w).sum())
            .collect();
        StateActionFn::new(self.n_states, self.n_actions, values)
    }

    /// `sum_{s,a} z(s,a) phi(s,a)`.
    pub fn transpose_apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_states * self.n_actions {
            return Err(Error::shape("cell weights", self.n_states * self.n_actions, z.len()));
        }
        let mut out = vec![0.0; self.dim];
        for (phi, &w) in self.values.chunks_exact(self.dim).zip(z) {
            if w != 0.0 {
                for (o, x) in out.iter_mut().zip(phi) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// Largest squared feature norm, used as a curvature bound for step sizes.
    pub fn max_sq_norm(&self) -> f64 {
        self.values
            .chunks_exact(self.dim)
            .map(|phi| phi.iter().map(|x| x * x).sum::<f64>())
            .fold(0.0, f64::max)
    }
}
