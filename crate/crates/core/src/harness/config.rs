//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [experiment]
//! master_seed = 0
//! seeds = 5
//!
//! [envs]
//! training = [
//!   { grid_height = 4, grid_width = 3, num_cubes = 3, episode_length = 200, tower_target = 3 },
//!   { grid_height = 5, grid_width = 4, num_cubes = 4, episode_length = 500, tower_target = 4 },
//! ]
//! test = { grid_height = 6, grid_width = 4, num_cubes = 5, episode_length = 800, tower_target = 5 }
//! ```
//!
//! Every other key has a default; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::{BlocksAction, BlocksConfig};
use crate::dispatch::EnvSpec;
use crate::error::{Error, Result};
use crate::internal_env::DEFAULT_PENALTY;
use crate::learning::Hyper;
use crate::machine_gen::GenParams;
use crate::pruning::ApplicabilityBudget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub master_seed: u64,
    /// Number of evaluation seeds.
    pub seeds: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let h = Hyper::default();
        ExperimentSection {
            master_seed: 0,
            seeds: 5,
            alpha: h.alpha,
            gamma: h.gamma,
            epsilon: h.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvsSection {
    pub training: Vec<BlocksConfig>,
    pub test: BlocksConfig,
    /// Seed of the cube layout; every episode of an environment starts from
    /// the same layout.
    pub layout_seed: u64,
}

impl Default for EnvsSection {
    fn default() -> Self {
        EnvsSection {
            training: vec![BlocksConfig::training_small(), BlocksConfig::training_large()],
            test: BlocksConfig::test(),
            layout_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    /// Including Start and Stop.
    pub max_vertices: usize,
    pub actions: Vec<BlocksAction>,
    pub per_action: usize,
    pub max_choice: usize,
    /// Upper bound on candidates taken from the stream; 0 means all.
    pub max_candidates: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection {
            max_vertices: 5,
            actions: BlocksAction::ALL.to_vec(),
            per_action: 1,
            max_choice: 1,
            max_candidates: 0,
        }
    }
}

impl GenSection {
    pub fn params(&self) -> GenParams {
        GenParams::new(self.max_vertices, &self.actions, self.per_action, self.max_choice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    /// Episodes of standard-machine training per environment for the baseline.
    pub baseline_episodes: usize,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub convergence_window: usize,
    pub success_fraction: f64,
}

impl Default for PruneSection {
    fn default() -> Self {
        let b = ApplicabilityBudget::default();
        PruneSection {
            baseline_episodes: 2000,
            train_episodes: b.train_episodes,
            eval_episodes: b.eval_episodes,
            convergence_window: b.convergence_window,
            success_fraction: b.success_fraction,
        }
    }
}

impl PruneSection {
    pub fn budget(&self) -> ApplicabilityBudget {
        ApplicabilityBudget {
            train_episodes: self.train_episodes,
            eval_episodes: self.eval_episodes,
            convergence_window: self.convergence_window,
            success_fraction: self.success_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InternalSection {
    pub search_episodes: usize,
    /// Internal actions per internal episode; derived from the multisets
    /// when absent.
    pub n_steps: Option<usize>,
    pub n_episodes: usize,
    pub reward_trials: usize,
    pub theta_f: f64,
    pub penalty: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for InternalSection {
    fn default() -> Self {
        let h = Hyper::default();
        InternalSection {
            search_episodes: 50,
            n_steps: None,
            n_episodes: 100,
            reward_trials: 5,
            theta_f: 0.95,
            penalty: DEFAULT_PENALTY,
            alpha: h.alpha,
            gamma: h.gamma,
            epsilon: h.epsilon,
        }
    }
}

impl InternalSection {
    pub fn hyper(&self) -> Hyper {
        Hyper {
            alpha: self.alpha,
            gamma: self.gamma,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombineSection {
    /// Episodes per training environment when scoring a combined solution.
    pub episodes: usize,
    pub trials: usize,
}

impl Default for CombineSection {
    fn default() -> Self {
        CombineSection {
            episodes: 500,
            trials: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Episodes on the test environment, shared by both learners.
    pub episodes: usize,
    /// Required ratio of median areas (HAM over flat) reported in the summary.
    pub margin: f64,
    pub epsilon_final: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            episodes: 1500,
            margin: 1.2,
            epsilon_final: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub envs: EnvsSection,
    pub gen: GenSection,
    pub prune: PruneSection,
    pub internal: InternalSection,
    pub combine: CombineSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Experiment(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.envs.training.is_empty() {
            return Err(Error::Experiment(
                "at least one training environment is required".into(),
            ));
        }
        if self.experiment.seeds == 0 {
            return Err(Error::Experiment("seeds must be positive".into()));
        }
        for c in self.envs.training.iter().chain([&self.envs.test]) {
            c.validate()?;
        }
        self.gen.params().validate()?;
        if self.prune.baseline_episodes == 0 {
            return Err(Error::Experiment("baseline_episodes must be positive".into()));
        }
        self.prune.budget().validate()?;
        let i = &self.internal;
        if i.n_episodes == 0 || i.reward_trials == 0 || i.n_steps == Some(0) {
            return Err(Error::Experiment("internal counts must be positive".into()));
        }
        if self.combine.trials == 0 || self.combine.episodes == 0 {
            return Err(Error::Experiment("combine counts must be positive".into()));
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            alpha: self.experiment.alpha,
            gamma: self.experiment.gamma,
            epsilon: self.experiment.epsilon,
        }
    }

    pub fn training_envs(&self) -> Vec<EnvSpec> {
        self.envs
            .training
            .iter()
            .map(|&c| EnvSpec::new(c, self.envs.layout_seed))
            .collect()
    }

    pub fn test_env(&self) -> EnvSpec {
        EnvSpec::new(self.envs.test, self.envs.layout_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.envs.training.len(), 2);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.internal.n_steps = Some(7);
        cfg.gen.actions = vec![BlocksAction::Up, BlocksAction::Down];
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_empty_training() {
        assert!(ExperimentConfig::from_toml("[gen]\nmax_vertexes = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[envs]\ntraining = []\n").is_err());
        assert!(ExperimentConfig::from_toml("[experiment]\nseeds = 0\n").is_err());
    }

    #[test]
    fn inline_env_tables() {
        let cfg = ExperimentConfig::from_toml(
            "[envs]\ntraining = [{ grid_height = 4, grid_width = 3, num_cubes = 3, episode_length = 200, tower_target = 3 }]\n",
        )
        .unwrap();
        assert_eq!(cfg.envs.training, vec![BlocksConfig::training_small()]);
    }
}
