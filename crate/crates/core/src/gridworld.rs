//! Gridworld domains with seeded ground-truth rewards.
//!
//! States are cells `s = y * width + x`; the five actions are
//! stay, up, down, left, right. Moves are deterministic. On a torus the grid
//! wraps; on a bounded grid an off-grid move leaves the agent in place.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{soft_value_iteration, PolicyTable, StateActionFn, TabularMdp};
use crate::rng;

pub const N_ACTIONS: usize = 5;
pub const STAY: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;
pub const RIGHT: usize = 4;

pub const DEFAULT_GAMMA: f64 = 0.97;

/// Tolerance and iteration cap for computing expert policies.
pub const EXPERT_TOL: f64 = 1e-10;
pub const EXPERT_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Torus,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    /// Linear in low-dimensional features: destination row, destination
    /// column and action indicators.
    Linear,
    /// Linear in one-hot destination-cell and action indicators: an
    /// arbitrary table over cells plus a per-action offset. The baseline sees
    /// one-hot state-action features, which contain it.
    TabularLinear,
    /// Smooth trigonometric reward; the exposed features are raw
    /// coordinates per action and cannot represent it.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub topology: Topology,
    pub reward_kind: RewardKind,
    pub reward_scale: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl GridworldSpec {
    /// 4x4 torus with linear rewards.
    pub fn easy(seed: u64) -> Self {
        Self {
            width: 4,
            height: 4,
            topology: Topology::Torus,
            reward_kind: RewardKind::Linear,
            reward_scale: 1.0,
            gamma: DEFAULT_GAMMA,
            seed,
        }
    }

    /// 8x8 bounded grid with tabular rewards.
    pub fn ident(seed: u64) -> Self {
        Self {
            width: 8,
            height: 8,
            topology: Topology::Bounded,
            reward_kind: RewardKind::TabularLinear,
            reward_scale: 1.0,
            gamma: DEFAULT_GAMMA,
            seed,
        }
    }

    /// 8x8 bounded grid with nonlinear rewards.
    pub fn hard(seed: u64) -> Self {
        Self {
            reward_kind: RewardKind::Nonlinear,
            ..Self::ident(seed)
        }
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn feature_dim(&self) -> usize {
        match self.reward_kind {
            RewardKind::Linear => self.width + self.height + N_ACTIONS,
            RewardKind::TabularLinear => self.n_states() * N_ACTIONS,
            RewardKind::Nonlinear => 3 * N_ACTIONS,
        }
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    /// Cell reached by taking `a` in `s`.
    pub fn step(&self, s: usize, a: usize) -> usize {
        let (x, y) = self.coords(s);
        let (w, h) = (self.width as isize, self.height as isize);
        let (dx, dy) = match a {
            UP => (0, -1),
            DOWN => (0, 1),
            LEFT => (-1, 0),
            RIGHT => (1, 0),
            _ => (0, 0),
        };
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        let (nx, ny) = match self.topology {
            Topology::Torus => (nx.rem_euclid(w), ny.rem_euclid(h)),
            Topology::Bounded => {
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    (x as isize, y as isize)
                } else {
                    (nx, ny)
                }
            }
        };
        ny as usize * self.width + nx as usize
    }
}

/// A built domain: kernel, ground-truth reward and the baseline's features.
#[derive(Debug, Clone)]
pub struct GridEnv {
    pub spec: GridworldSpec,
    pub mdp: TabularMdp,
    pub r_true: StateActionFn,
    pub features: FeatureMap,
}

fn unit(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

pub fn build_env(spec: &GridworldSpec) -> Result<GridEnv> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::InvalidArgument("gridworld must have at least one cell".into()));
    }
    if !spec.reward_scale.is_finite() {
        return Err(Error::NotFinite { context: "reward scale" });
    }
    let ns = spec.n_states();
    let mdp = TabularMdp::deterministic(ns, N_ACTIONS, spec.gamma, |s, a| spec.step(s, a))?;
    let mut rng = rng::stream(spec.seed, 0);
    let (w, h) = (spec.width, spec.height);

    let (features, r_true) = match spec.reward_kind {
        RewardKind::Linear => {
            let dim = spec.feature_dim();
            let features = FeatureMap::from_fn(ns, N_ACTIONS, dim, |s, a, phi| {
                let (x, y) = spec.coords(spec.step(s, a));
                phi[x] = 1.0;
                phi[w + y] = 1.0;
                phi[w + h + a] = 1.0;
            })?;
            let theta: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    spec.reward_scale * z
                })
                .collect();
            let r = features.linear(&theta)?;
            (features, r)
        }
        RewardKind::TabularLinear => {
            let features = FeatureMap::one_hot(ns, N_ACTIONS);
            let mut draw = || -> f64 {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.reward_scale * z
            };
            let cell: Vec<f64> = (0..ns).map(|_| draw()).collect();
            let action: Vec<f64> = (0..N_ACTIONS).map(|_| draw()).collect();
            let r = StateActionFn::from_fn(ns, N_ACTIONS, |s, a| cell[spec.step(s, a)] + action[a]);
            (features, r)
        }
        RewardKind::Nonlinear => {
            let features = FeatureMap::from_fn(ns, N_ACTIONS, spec.feature_dim(), |s, a, phi| {
                let (x, y) = spec.coords(s);
                phi[a] = unit(x, w);
                phi[N_ACTIONS + a] = unit(y, h);
                phi[2 * N_ACTIONS + a] = 1.0;
            })?;
            let freq: [f64; 4] = core::array::from_fn(|_| rng.random_range(1.0..2.0));
            let phase: Vec<[f64; 3]> = (0..N_ACTIONS)
                .map(|_| core::array::from_fn(|_| rng.random_range(0.0..2.0 * PI)))
                .collect();
            let r = StateActionFn::from_fn(ns, N_ACTIONS, |s, a| {
                let (x, y) = spec.coords(s);
                let (u, v) = (unit(x, w), unit(y, h));
                let p = &phase[a];
                let wave = libm::sin(2.0 * PI * freq[0] * u + p[0]) * libm::cos(2.0 * PI * freq[1] * v + p[1])
                    + 0.5 * libm::sin(2.0 * PI * (freq[2] * u + freq[3] * v) + p[2]);
                spec.reward_scale * wave
            });
            (features, r)
        }
    };
    Ok(GridEnv {
        spec: spec.clone(),
        mdp,
        r_true,
        features,
    })
}

/// Softmax-optimal policy `pi*(a|s) ∝ exp Q(s,a)` for the reward.
pub fn expert_policy(mdp: &TabularMdp, r_true: &StateActionFn) -> Result<PolicyTable> {
    Ok(soft_value_iteration(mdp, r_true, EXPERT_TOL, EXPERT_MAX_ITER)?.policy)
}
