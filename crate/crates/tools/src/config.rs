//! Experiment configuration: a sectioned TOML file with `[env]`, `[solver]`,
//! `[baseline]` and `[eval]` tables. Every key has a default, so an empty
//! file is a valid configuration; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softirl_core::gridworld::{GridEnv, GridworldSpec, RewardKind, Topology, DEFAULT_GAMMA};
use softirl_core::maxent::{MaxEntConfig, Optimizer, StepSchedule, WeightInit, DEFAULT_INNER_MAX_ITER};
use softirl_core::oracles::{ClassifierSpec, LogisticConfig, LogisticSolver, RegressorSpec};
use softirl_core::solver::{IterationCount, NormalizationKind, SolverConfig};
use softirl_core::{FeatureMap, SamplingRegime, StateDistribution};

use crate::formats::{read_text, FormatError};

pub const PRESETS: [&str; 3] = ["easy", "ident", "hard"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Read(#[from] FormatError),
    #[error("{}: {message}", path.display())]
    Syntax { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}; expected easy, ident or hard")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyName {
    Torus,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardName {
    Linear,
    TabularLinear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeName {
    DiscountedRestart,
    Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniformTag {
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoTag {
    Auto,
}

/// `"uniform"` or a start state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitName {
    Named(UniformTag),
    State(usize),
}

/// `"auto"` or a fixed iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IterationName {
    Named(AutoTag),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// Environment id written into dataset headers.
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub topology: TopologyName,
    pub reward: RewardName,
    pub reward_scale: f64,
    pub gamma: f64,
    pub n: usize,
    pub regime: RegimeName,
    pub init: InitName,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            name: "ident".into(),
            width: 8,
            height: 8,
            topology: TopologyName::Bounded,
            reward: RewardName::TabularLinear,
            reward_scale: 1.0,
            gamma: DEFAULT_GAMMA,
            n: 50_000,
            regime: RegimeName::DiscountedRestart,
            init: InitName::Named(UniformTag::Uniform),
        }
    }
}

impl EnvSection {
    pub fn spec(&self, seed: u64) -> GridworldSpec {
        GridworldSpec {
            width: self.width,
            height: self.height,
            topology: match self.topology {
                TopologyName::Torus => Topology::Torus,
                TopologyName::Bounded => Topology::Bounded,
            },
            reward_kind: match self.reward {
                RewardName::Linear => RewardKind::Linear,
                RewardName::TabularLinear => RewardKind::TabularLinear,
                RewardName::Nonlinear => RewardKind::Nonlinear,
            },
            reward_scale: self.reward_scale,
            gamma: self.gamma,
            seed,
        }
    }

    pub fn regime(&self) -> SamplingRegime {
        match self.regime {
            RegimeName::DiscountedRestart => SamplingRegime::DiscountedRestart,
            RegimeName::Trajectory => SamplingRegime::Trajectory,
        }
    }

    pub fn init_distribution(&self) -> Result<StateDistribution, ConfigError> {
        let ns = self.width * self.height;
        match self.init {
            InitName::Named(UniformTag::Uniform) => Ok(StateDistribution::uniform(ns)),
            InitName::State(s) => StateDistribution::point_mass(ns, s)
                .map_err(|_| ConfigError::Invalid(format!("env.init state {s} outside 0..{ns}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    ClassifyRegress,
    Split,
    /// Population solve with the true expert policy.
    Exact,
}

impl AlgorithmName {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmName::ClassifyRegress => "classify-regress",
            AlgorithmName::Split => "split",
            AlgorithmName::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuName {
    Uniform,
    PointMass,
    Behavior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierName {
    Tabular,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorName {
    Tabular,
    Ridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureName {
    /// `[P(.|s,a), e_a]`.
    Successor,
    OneHot,
    /// The environment's own reward features.
    Env,
}

impl FeatureName {
    pub fn build(self, env: &GridEnv) -> FeatureMap {
        match self {
            FeatureName::Successor => FeatureMap::successor_indicators(&env.mdp),
            FeatureName::OneHot => FeatureMap::one_hot(env.mdp.n_states(), env.mdp.n_actions()),
            FeatureName::Env => env.features.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogisticSolverName {
    Newton,
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub algorithm: AlgorithmName,
    pub k: IterationName,
    pub mu: MuName,
    /// Action charged by `mu = "point-mass"`.
    pub mu_action: usize,
    pub classifier: ClassifierName,
    pub classifier_features: FeatureName,
    pub smoothing: f64,
    pub prob_floor: f64,
    pub logistic_solver: LogisticSolverName,
    pub logistic_epochs: usize,
    pub logistic_l2: f64,
    pub logistic_tolerance: f64,
    pub regressor: RegressorName,
    pub regressor_features: FeatureName,
    pub ridge_lambda: f64,
    /// Regression value for cells without data.
    pub fallback: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmName::ClassifyRegress,
            k: IterationName::Named(AutoTag::Auto),
            mu: MuName::Uniform,
            mu_action: 0,
            classifier: ClassifierName::Logistic,
            classifier_features: FeatureName::Successor,
            smoothing: 0.5,
            prob_floor: softirl_core::oracles::DEFAULT_PROB_FLOOR,
            logistic_solver: LogisticSolverName::Newton,
            logistic_epochs: 100,
            logistic_l2: 0.0,
            logistic_tolerance: 1e-12,
            regressor: RegressorName::Tabular,
            regressor_features: FeatureName::OneHot,
            ridge_lambda: 1e-6,
            fallback: 0.0,
        }
    }
}

impl SolverSection {
    pub fn normalization(&self) -> NormalizationKind {
        match self.mu {
            MuName::Uniform => NormalizationKind::Uniform,
            MuName::PointMass => NormalizationKind::PointMass(self.mu_action),
            MuName::Behavior => NormalizationKind::BehaviorPolicy,
        }
    }

    pub fn iterations(&self) -> IterationCount {
        match self.k {
            IterationName::Named(AutoTag::Auto) => IterationCount::Auto,
            IterationName::Fixed(k) => IterationCount::Fixed(k),
        }
    }

    pub fn solver_config(&self, env: &GridEnv) -> SolverConfig {
        let mut classifier = match self.classifier {
            ClassifierName::Tabular => ClassifierSpec::tabular(self.smoothing),
            ClassifierName::Logistic => {
                let mut lc = LogisticConfig::new(self.classifier_features.build(env));
                lc.solver = match self.logistic_solver {
                    LogisticSolverName::Newton => LogisticSolver::Newton,
                    LogisticSolverName::GradientDescent => LogisticSolver::GradientDescent,
                };
                lc.epochs = self.logistic_epochs;
                lc.l2 = self.logistic_l2;
                lc.tolerance = self.logistic_tolerance;
                ClassifierSpec::logistic(lc)
            }
        };
        classifier.prob_floor = self.prob_floor;
        let regressor = match self.regressor {
            RegressorName::Tabular => RegressorSpec::tabular(self.fallback),
            RegressorName::Ridge => RegressorSpec::ridge(self.regressor_features.build(env), self.ridge_lambda),
        };
        SolverConfig {
            gamma: env.mdp.gamma(),
            k: self.iterations(),
            mu: self.normalization(),
            classifier,
            regressor,
            split: self.algorithm == AlgorithmName::Split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    Ascent,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    Constant,
    InvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitWeightsName {
    Zeros,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub enabled: bool,
    pub features: FeatureName,
    pub optimizer: OptimizerName,
    pub step_size: f64,
    pub schedule: ScheduleName,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub inner_tol: f64,
    /// Hold out every k-th record for early stopping; 0 disables.
    pub holdout_every: usize,
    pub init: InitWeightsName,
    /// Standard deviation of Gaussian initial weights, seeded by the rerun seed.
    pub init_scale: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = MaxEntConfig::default();
        Self {
            enabled: true,
            features: FeatureName::Env,
            optimizer: OptimizerName::Adam,
            step_size: 0.1,
            schedule: ScheduleName::Constant,
            clip_norm: d.clip_norm,
            max_epochs: 1000,
            patience: 30,
            tolerance: d.tolerance,
            inner_tol: d.inner_tol,
            holdout_every: 10,
            init: InitWeightsName::Zeros,
            init_scale: 0.01,
        }
    }
}

impl BaselineSection {
    pub fn maxent_config(&self, seed: u64) -> MaxEntConfig {
        MaxEntConfig {
            init: match self.init {
                InitWeightsName::Zeros => WeightInit::Zeros,
                InitWeightsName::Gaussian => WeightInit::Gaussian {
                    seed,
                    scale: self.init_scale,
                },
            },
            step_size: self.step_size,
            schedule: match self.schedule {
                ScheduleName::Constant => StepSchedule::Constant,
                ScheduleName::InvSqrt => StepSchedule::InvSqrt,
            },
            clip_norm: self.clip_norm,
            max_epochs: self.max_epochs,
            patience: self.patience,
            tolerance: self.tolerance,
            inner_tol: self.inner_tol,
            inner_max_iter: DEFAULT_INNER_MAX_ITER,
            optimizer: match self.optimizer {
                OptimizerName::Ascent => Optimizer::ClippedAscent,
                OptimizerName::Adam => Optimizer::adam(),
            },
            holdout_every: self.holdout_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingName {
    Uniform,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub reruns: usize,
    /// Rerun `i` uses seed `base_seed + i` for the environment and the data.
    pub base_seed: u64,
    pub weighting: WeightingName,
    pub ref_action: usize,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            reruns: 20,
            base_seed: 0,
            weighting: WeightingName::Uniform,
            ref_action: 0,
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub solver: SolverSection,
    pub baseline: BaselineSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Built-in configuration for the easy, ident and hard domains.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        match name {
            "easy" => {
                cfg.env = EnvSection {
                    name: "easy".into(),
                    width: 4,
                    height: 4,
                    topology: TopologyName::Torus,
                    reward: RewardName::Linear,
                    reward_scale: 0.5,
                    ..EnvSection::default()
                };
                cfg.baseline = BaselineSection {
                    optimizer: OptimizerName::Ascent,
                    step_size: 5.0,
                    schedule: ScheduleName::InvSqrt,
                    patience: 50,
                    holdout_every: 0,
                    ..BaselineSection::default()
                };
            }
            "ident" => {
                cfg.env.reward_scale = 0.4;
            }
            "hard" => {
                cfg.env = EnvSection {
                    name: "hard".into(),
                    reward: RewardName::Nonlinear,
                    reward_scale: 0.5,
                    ..EnvSection::default()
                };
                cfg.solver.classifier = ClassifierName::Tabular;
                cfg.solver.smoothing = 0.5;
            }
            other => return Err(ConfigError::UnknownPreset(other.into())),
        }
        Ok(cfg)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(path, &read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        let e = &self.env;
        if e.width == 0 || e.height == 0 {
            return bad("env.width and env.height must be positive");
        }
        if e.name.is_empty() || e.name.contains(char::is_whitespace) {
            return bad("env.name must be a non-empty token without spaces");
        }
        if !(e.gamma > 0.0 && e.gamma < 1.0) {
            return bad("env.gamma must lie in (0, 1)");
        }
        if !e.reward_scale.is_finite() {
            return bad("env.reward_scale must be finite");
        }
        if e.n == 0 {
            return bad("env.n must be at least 1");
        }
        e.init_distribution()?;
        let s = &self.solver;
        if s.mu == MuName::PointMass && s.mu_action >= softirl_core::gridworld::N_ACTIONS {
            return bad("solver.mu_action out of range");
        }
        if s.k == IterationName::Fixed(0) {
            return bad("solver.k must be at least 1");
        }
        if !(s.smoothing >= 0.0) || !(s.logistic_l2 >= 0.0) || !(s.ridge_lambda >= 0.0) {
            return bad("solver smoothing and penalties must be nonnegative");
        }
        if !(s.prob_floor > 0.0 && s.prob_floor < 1.0 / softirl_core::gridworld::N_ACTIONS as f64) {
            return bad("solver.prob_floor must lie in (0, 1/|A|)");
        }
        self.baseline
            .maxent_config(0)
            .validate()
            .map_err(|err| ConfigError::Invalid(format!("baseline: {err}")))?;
        if self.eval.reruns == 0 {
            return bad("eval.reruns must be at least 1");
        }
        if self.eval.ref_action >= softirl_core::gridworld::N_ACTIONS {
            return bad("eval.ref_action out of range");
        }
        Ok(())
    }
}
