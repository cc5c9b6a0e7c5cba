//! Per-cluster applicability filtering of candidate machines.
//!
//! A candidate is tried in one cluster while every other cluster runs the
//! standard machine with a frozen, greedily followed baseline table. It is
//! kept when its trailing mean normalized return reaches the threshold.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::ClusterKey;
use crate::dispatch::{DispatchSetup, EnvSpec};
use crate::error::{Error, Result};
use crate::flat_q::LearningCurve;
use crate::ham::{ChoiceLearner, ChoiceQTable, MachineGraph};
use crate::learning::{derive_seed, Hyper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityBudget {
    pub train_episodes: usize,
    /// Greedy rollouts of the trained baseline, counted towards each
    /// environment's normalization constant.
    pub eval_episodes: usize,
    pub convergence_window: usize,
    pub success_fraction: f64,
}

impl Default for ApplicabilityBudget {
    fn default() -> Self {
        ApplicabilityBudget {
            train_episodes: 500,
            eval_episodes: 1,
            convergence_window: 50,
            success_fraction: 0.95,
        }
    }
}

impl ApplicabilityBudget {
    pub fn validate(&self) -> Result<()> {
        if self.train_episodes == 0 || self.convergence_window == 0 {
            return Err(Error::Experiment("pruning budgets must be positive".into()));
        }
        if self.convergence_window > self.train_episodes {
            return Err(Error::Experiment("convergence_window exceeds train_episodes".into()));
        }
        if !(self.success_fraction > 0.0 && self.success_fraction <= 1.0) {
            return Err(Error::Experiment("success_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Standard-machine policy trained on every environment, frozen afterwards.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub table: ChoiceQTable,
    /// Best episode return observed per environment (normalization constants).
    pub max_returns: Vec<f64>,
    pub curves: Vec<LearningCurve>,
    pub hyper: Hyper,
}

impl Baseline {
    pub fn normalized(&self, env_index: usize, reward: f64) -> f64 {
        let max = self.max_returns[env_index];
        if max > 0.0 {
            reward / max
        } else {
            0.0
        }
    }
}

/// Trains the all-standard hierarchy for `episodes` episodes on each
/// environment in turn, sharing one table.
pub fn train_baseline(
    envs: &[EnvSpec],
    episodes: usize,
    budget: &ApplicabilityBudget,
    hyper: Hyper,
    seed: u64,
) -> Result<Baseline> {
    if envs.is_empty() {
        return Err(Error::Experiment("no training environments".into()));
    }
    let setup = DispatchSetup::all_standard()?;
    let mut learner = ChoiceLearner::new(ChoiceQTable::new(hyper.alpha, hyper.gamma), hyper.epsilon, true);
    let mut curves = Vec::new();
    let mut max_returns = Vec::new();
    for (i, env) in envs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "baseline", i as u64));
        learner.epsilon = hyper.epsilon;
        learner.learn = true;
        let curve = setup.train(env, &mut learner, episodes, &mut rng)?;
        let mut best = curve.max_reward();

        learner.epsilon = 0.0;
        learner.learn = false;
        for _ in 0..budget.eval_episodes {
            let mut session = env.session()?;
            best = best.max(setup.run_episode(&mut session, &mut learner, &mut rng)?.reward);
        }
        curves.push(curve);
        max_returns.push(best);
    }
    for (curve, &max) in curves.iter_mut().zip(&max_returns) {
        curve.normalize_by(max);
    }
    Ok(Baseline {
        table: learner.table,
        max_returns,
        curves,
        hyper,
    })
}

#[derive(Debug, Clone)]
pub struct ApplicabilityRun {
    /// Mean over environments of the trailing-window normalized return.
    pub score: f64,
    pub per_env: Vec<f64>,
    pub curves: Vec<LearningCurve>,
    pub table: ChoiceQTable,
}

/// Learns with `candidate` serving `cluster` (fresh Q entries) while the
/// other clusters follow the frozen baseline greedily.
pub fn run_applicability(
    candidate: &MachineGraph,
    cluster: ClusterKey,
    baseline: &Baseline,
    envs: &[EnvSpec],
    episodes: usize,
    window: usize,
    seed: u64,
) -> Result<ApplicabilityRun> {
    let setup = DispatchSetup::new(&BTreeMap::from([(cluster, candidate.clone())]))?;
    let mut learner = ChoiceLearner::new(baseline.table.clone(), baseline.hyper.epsilon, true);
    learner.freeze(DispatchSetup::STANDARD);
    let mut per_env = Vec::new();
    let mut curves = Vec::new();
    for (i, env) in envs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "applicability", i as u64));
        let mut curve = setup.train(env, &mut learner, episodes, &mut rng)?;
        curve.normalize_by(baseline.max_returns[i]);
        let tail = &curve.records[curve.len().saturating_sub(window)..];
        let mean = if tail.is_empty() {
            0.0
        } else {
            tail.iter().map(|r| r.normalized).sum::<f64>() / tail.len() as f64
        };
        per_env.push(mean);
        curves.push(curve);
    }
    let score = per_env.iter().sum::<f64>() / per_env.len().max(1) as f64;
    Ok(ApplicabilityRun {
        score,
        per_env,
        curves,
        table: learner.table,
    })
}

/// Whether `candidate` converges in `cluster` within the budget. Machines
/// that fail to execute count as not applicable.
pub fn check_applicability(
    candidate: &MachineGraph,
    cluster: ClusterKey,
    baseline: &Baseline,
    envs: &[EnvSpec],
    budget: &ApplicabilityBudget,
    seed: u64,
) -> bool {
    match run_applicability(
        candidate,
        cluster,
        baseline,
        envs,
        budget.train_episodes,
        budget.convergence_window,
        seed,
    ) {
        Ok(run) => run.score >= budget.success_fraction,
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrunedSet {
    pub map: BTreeMap<ClusterKey, Vec<MachineGraph>>,
}

impl PrunedSet {
    /// Manifest lines `cluster <height> <hold> machine <file>`; clusters
    /// with no applicable machine are listed as `cluster <h> <hold> none`.
    pub fn manifest(&self, file_of: impl Fn(&MachineGraph) -> String) -> String {
        let mut out = String::new();
        for (c, machines) in &self.map {
            if machines.is_empty() {
                let _ = writeln!(out, "cluster {} {} none", c.manip_height, c.holding);
            }
            for m in machines {
                let _ = writeln!(out, "cluster {} {} machine {}", c.manip_height, c.holding, file_of(m));
            }
        }
        out
    }

    /// Reads a manifest, resolving machine files through `load`.
    pub fn from_manifest(text: &str, mut load: impl FnMut(&str) -> Result<MachineGraph>) -> Result<Self> {
        let mut map: BTreeMap<ClusterKey, Vec<MachineGraph>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                msg: format!("malformed manifest line `{line}`"),
            };
            if toks.len() < 4 || toks[0] != "cluster" {
                return Err(bad());
            }
            let cluster = ClusterKey::new(toks[1].parse().map_err(|_| bad())?, toks[2].parse().map_err(|_| bad())?);
            let entry = map.entry(cluster).or_default();
            match (toks[3], toks.get(4)) {
                ("none", None) => {}
                ("machine", Some(file)) if toks.len() == 5 => entry.push(load(file)?),
                _ => return Err(bad()),
            }
        }
        Ok(PrunedSet { map })
    }

    pub fn multisets_for(&self, cluster: ClusterKey) -> Vec<crate::machine_gen::VertexMultiset> {
        let mut out: Vec<_> = self
            .map
            .get(&cluster)
            .into_iter()
            .flatten()
            .map(|g| {
                let mut kinds = g.kinds().to_vec();
                kinds.sort();
                crate::machine_gen::VertexMultiset(kinds)
            })
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out.dedup();
        out
    }
}

/// Keeps, per cluster, every candidate passing the applicability check.
/// Clusters missing from any training environment are skipped.
pub fn prune(
    candidates: impl IntoIterator<Item = MachineGraph>,
    clusters: &[ClusterKey],
    baseline: &Baseline,
    envs: &[EnvSpec],
    budget: &ApplicabilityBudget,
    seed: u64,
) -> PrunedSet {
    let candidates: Vec<MachineGraph> = candidates.into_iter().collect();
    let configs: Vec<_> = envs.iter().map(|e| e.config).collect();
    let represented = ClusterKey::represented_in(&configs);
    let mut map = BTreeMap::new();
    for (ci, &cluster) in clusters.iter().enumerate() {
        if !represented.contains(&cluster) {
            continue;
        }
        let cluster_seed = derive_seed(seed, "prune", ci as u64);
        let keep: Vec<MachineGraph> = candidates
            .par_iter()
            .filter(|g| check_applicability(g, cluster, baseline, envs, budget, cluster_seed))
            .cloned()
            .collect();
        map.insert(cluster, keep);
    }
    PrunedSet { map }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{BlocksAction, BlocksConfig};
    use crate::ham::VertexKind;

    fn small_envs() -> Vec<EnvSpec> {
        vec![EnvSpec::new(BlocksConfig::training_small(), 0)]
    }

    #[test]
    fn budget_validation() {
        assert!(ApplicabilityBudget::default().validate().is_ok());
        let bad = ApplicabilityBudget {
            convergence_window: 600,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_stream_maps_every_represented_cluster_to_nothing() {
        let envs = small_envs();
        let budget = ApplicabilityBudget {
            train_episodes: 5,
            eval_episodes: 1,
            convergence_window: 5,
            success_fraction: 0.9,
        };
        let baseline = train_baseline(&envs, 5, &budget, Hyper::default(), 0).unwrap();
        let clusters = vec![ClusterKey::new(1, false), ClusterKey::new(9, false)];
        let set = prune(Vec::new(), &clusters, &baseline, &envs, &budget, 0);
        assert_eq!(set.map.len(), 1);
        assert!(set.map[&ClusterKey::new(1, false)].is_empty());
    }

    #[test]
    fn manifest_round_trip() {
        let g = MachineGraph::with_edges(
            vec![
                VertexKind::Start,
                VertexKind::Action(BlocksAction::Up),
                VertexKind::Stop,
            ],
            [(0, 1), (1, 2)],
        );
        let set = PrunedSet {
            map: BTreeMap::from([
                (ClusterKey::new(1, true), vec![g.clone()]),
                (ClusterKey::new(0, false), vec![]),
            ]),
        };
        let text = set.manifest(|_| "up.ham".into());
        assert_eq!(text, "cluster 0 false none\ncluster 1 true machine up.ham\n");
        let back = PrunedSet::from_manifest(&text, |f| {
            assert_eq!(f, "up.ham");
            Ok(g.clone())
        })
        .unwrap();
        assert_eq!(back, set);
    }
}
