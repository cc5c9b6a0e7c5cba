//! Running a cluster-dispatched hierarchy of machines episode by episode.

use std::collections::BTreeMap;

use rand::Rng;

use crate::blocks::{BlocksAction, BlocksConfig, ClusterKey, EnvSession};
use crate::error::Result;
use crate::flat_q::{EpisodeStats, LearningCurve};
use crate::ham::{build_root, run_machine, ChoiceLearner, MachineGraph, MachineId, MachineLibrary};
use crate::machine_gen::build_standard_step_machine;

/// A training environment: configuration plus the seed of its cube layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub config: BlocksConfig,
    pub layout_seed: u64,
}

impl EnvSpec {
    pub fn new(config: BlocksConfig, layout_seed: u64) -> Self {
        EnvSpec { config, layout_seed }
    }

    pub fn session(&self) -> Result<EnvSession> {
        EnvSession::new(self.config, self.layout_seed)
    }
}

/// Library and root dispatcher for a cluster assignment. The single-step
/// standard machine is always [`DispatchSetup::STANDARD`], so tables trained
/// on one setup stay meaningful in another.
#[derive(Debug, Clone)]
pub struct DispatchSetup {
    pub library: MachineLibrary,
    pub root: MachineId,
    pub assigned: BTreeMap<ClusterKey, MachineId>,
}

impl DispatchSetup {
    pub const STANDARD: MachineId = MachineId(0);

    /// Every cluster not in `assignment` runs the standard machine.
    pub fn new(assignment: &BTreeMap<ClusterKey, MachineGraph>) -> Result<Self> {
        let mut library = MachineLibrary::new();
        let standard = library.insert(build_standard_step_machine(&BlocksAction::ALL)?)?;
        debug_assert_eq!(standard, Self::STANDARD);
        let mut assigned = BTreeMap::new();
        for (&cluster, graph) in assignment {
            assigned.insert(cluster, library.insert(graph.clone())?);
        }
        let root = build_root(&assigned, standard, &library)?;
        let root = library.insert(root)?;
        Ok(DispatchSetup {
            library,
            root,
            assigned,
        })
    }

    pub fn all_standard() -> Result<Self> {
        Self::new(&BTreeMap::new())
    }

    pub fn machine_for(&self, cluster: ClusterKey) -> MachineId {
        self.assigned.get(&cluster).copied().unwrap_or(Self::STANDARD)
    }

    /// Plays one episode from `session` to its end.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        session: &mut EnvSession,
        learner: &mut ChoiceLearner,
        rng: &mut R,
    ) -> Result<EpisodeStats> {
        let mut stats = EpisodeStats { reward: 0.0, steps: 0 };
        while !session.is_done() {
            let r = run_machine(self.root, &self.library, session, learner, rng)?;
            stats.reward += r.total_reward;
            stats.steps += r.steps;
            if r.livelocked || !r.terminated {
                break;
            }
        }
        learner.end_episode();
        Ok(stats)
    }

    /// Runs `episodes` episodes of `env` and records the learning curve
    /// (not normalized).
    pub fn train<R: Rng + ?Sized>(
        &self,
        env: &EnvSpec,
        learner: &mut ChoiceLearner,
        episodes: usize,
        rng: &mut R,
    ) -> Result<LearningCurve> {
        let mut curve = LearningCurve::default();
        for _ in 0..episodes {
            let mut session = env.session()?;
            let stats = self.run_episode(&mut session, learner, rng)?;
            curve.push(stats.reward, stats.steps);
        }
        Ok(curve)
    }
}
