//! End-to-end experiment driver: generate, prune, search, combine and
//! evaluate against flat Q-learning, writing every artifact to a directory.

mod artifacts;
mod config;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use artifacts::{cluster_stem, Artifacts};
pub use config::{
    CombineSection, EnvsSection, EvalSection, ExperimentConfig, ExperimentSection, GenSection, InternalSection,
    PruneSection,
};

use crate::blocks::{BlocksAction, BlocksConfig, ClusterKey};
use crate::dispatch::{DispatchSetup, EnvSpec};
use crate::error::{Error, Result};
use crate::flat_q::{self, scheduled_epsilon, LearningCurve, TrainOptions};
use crate::ham::{ChoiceLearner, ChoiceQTable, MachineGraph};
use crate::internal_env::{default_n_steps, search_structure, EpisodeContext, InternalEnv, SearchResult};
use crate::learning::{derive_seed, Hyper};
use crate::machine_gen::{build_standard_step_machine, canonicalize, enumerate_machines, enumerate_vertex_sets};
use crate::pruning::{prune, train_baseline, Baseline, PrunedSet};

/// `reward / baseline_max`; an environment the baseline never solved has no
/// meaningful scale and is reported as an error.
pub fn normalize(reward: f64, baseline_max: f64) -> Result<f64> {
    if baseline_max > 0.0 {
        Ok(reward / baseline_max)
    } else {
        Err(Error::Normalization(baseline_max))
    }
}

/// Median of `values` (mean of the middle pair for even lengths); NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Searched,
    Standard,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Searched => "searched",
            Provenance::Standard => "standard",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "searched" => Ok(Provenance::Searched),
            "standard" => Ok(Provenance::Standard),
            _ => Err(Error::Experiment(format!("unknown provenance `{s}`"))),
        }
    }
}

/// Keep-or-revert decision for one cluster during combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineStep {
    pub cluster: ClusterKey,
    pub with_searched: f64,
    pub with_standard: f64,
    pub kept: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSolution {
    pub cluster_map: BTreeMap<ClusterKey, MachineGraph>,
    pub provenance: BTreeMap<ClusterKey, Provenance>,
    pub steps: Vec<CombineStep>,
}

impl CombinedSolution {
    /// Every cluster in `clusters` served by the standard machine.
    pub fn all_standard(clusters: &[ClusterKey]) -> Self {
        let std = standard_machine();
        CombinedSolution {
            cluster_map: clusters.iter().map(|&c| (c, std.clone())).collect(),
            provenance: clusters.iter().map(|&c| (c, Provenance::Standard)).collect(),
            steps: Vec::new(),
        }
    }

    /// Clusters served by searched machines; all others fall back to the
    /// standard machine in the dispatcher.
    pub fn assignment(&self) -> BTreeMap<ClusterKey, MachineGraph> {
        self.provenance
            .iter()
            .filter(|(_, &p)| p == Provenance::Searched)
            .map(|(c, _)| (*c, self.cluster_map[c].clone()))
            .collect()
    }
}

fn standard_machine() -> MachineGraph {
    canonicalize(&build_standard_step_machine(&BlocksAction::ALL).expect("five actions")).0
}

/// Scores assignments by learning from scratch on the training environments.
#[derive(Debug, Clone)]
pub struct CombineContext {
    pub envs: Vec<EnvSpec>,
    pub baseline_max: Vec<f64>,
    pub episodes: usize,
    pub trials: usize,
    pub hyper: Hyper,
    pub seed: u64,
}

impl CombineContext {
    /// Mean normalized area under the learning curve over trials and
    /// environments.
    pub fn score(&self, assignment: &BTreeMap<ClusterKey, MachineGraph>) -> Result<f64> {
        let setup = DispatchSetup::new(assignment)?;
        let jobs: Vec<(usize, usize)> = (0..self.trials)
            .flat_map(|t| (0..self.envs.len()).map(move |e| (t, e)))
            .collect();
        let areas: Vec<f64> = jobs
            .par_iter()
            .map(|&(t, e)| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "combine", (t * self.envs.len() + e) as u64));
                let mut learner = fresh_learner(self.hyper);
                let mut curve = setup.train(&self.envs[e], &mut learner, self.episodes, &mut rng)?;
                if self.baseline_max[e] <= 0.0 {
                    return Err(Error::Normalization(self.baseline_max[e]));
                }
                curve.normalize_by(self.baseline_max[e]);
                Ok(curve.area())
            })
            .collect::<Result<_>>()?;
        Ok(areas.iter().sum::<f64>() / areas.len() as f64)
    }
}

fn fresh_learner(hyper: Hyper) -> ChoiceLearner {
    ChoiceLearner::new(ChoiceQTable::new(hyper.alpha, hyper.gamma), hyper.epsilon, true)
}

/// Greedy keep-or-revert assembly. Clusters are visited by descending mean
/// search return; each searched machine is kept only if the combined score
/// strictly improves, so ties keep the standard machine.
pub fn combine(
    per_cluster_best: &BTreeMap<ClusterKey, (MachineGraph, f64)>,
    clusters: &[ClusterKey],
    ctx: &CombineContext,
) -> Result<CombinedSolution> {
    let mut solution = CombinedSolution::all_standard(clusters);
    let std = standard_machine();
    let mut order: Vec<(ClusterKey, &MachineGraph, f64)> =
        per_cluster_best.iter().map(|(&c, (g, r))| (c, g, *r)).collect();
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let mut current = BTreeMap::new();
    let mut current_score = ctx.score(&current)?;
    for (cluster, graph, _) in order {
        if canonicalize(graph).0 == std {
            solution.provenance.insert(cluster, Provenance::Standard);
            continue;
        }
        let mut candidate = current.clone();
        candidate.insert(cluster, graph.clone());
        let score = ctx.score(&candidate)?;
        let kept = if score > current_score {
            current = candidate;
            let before = current_score;
            current_score = score;
            solution.cluster_map.insert(cluster, graph.clone());
            solution.steps.push(CombineStep {
                cluster,
                with_searched: score,
                with_standard: before,
                kept: Provenance::Searched,
            });
            Provenance::Searched
        } else {
            solution.steps.push(CombineStep {
                cluster,
                with_searched: score,
                with_standard: current_score,
                kept: Provenance::Standard,
            });
            Provenance::Standard
        };
        solution.provenance.insert(cluster, kept);
    }
    Ok(solution)
}

/// Seed of evaluation run `index`.
pub fn eval_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, "eval", index as u64)
}

/// Trains the dispatcher's choice values from scratch on `env`, once per
/// seed. Curves are not normalized.
pub fn evaluate(
    solution: &CombinedSolution,
    env: &EnvSpec,
    episodes: usize,
    seeds: &[u64],
    hyper: Hyper,
    epsilon_final: Option<f64>,
) -> Result<Vec<LearningCurve>> {
    let setup = DispatchSetup::new(&solution.assignment())?;
    seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut learner = fresh_learner(hyper);
            let mut curve = LearningCurve::default();
            for ep in 0..episodes {
                learner.epsilon = scheduled_epsilon(hyper.epsilon, epsilon_final, ep, episodes);
                let mut session = env.session()?;
                let stats = setup.run_episode(&mut session, &mut learner, &mut rng)?;
                curve.push(stats.reward, stats.steps);
            }
            Ok(curve)
        })
        .collect()
}

/// Flat Q-learning curves under the same seeds as [`evaluate`].
pub fn evaluate_flat(
    env: &EnvSpec,
    episodes: usize,
    seeds: &[u64],
    hyper: Hyper,
    epsilon_final: Option<f64>,
) -> Result<Vec<LearningCurve>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let opts = TrainOptions {
                episodes,
                hyper,
                seed,
                layout_seed: env.layout_seed,
                epsilon_final,
            };
            flat_q::train(&env.config, &opts).map(|(_, c)| c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub test_env: BlocksConfig,
    pub normalization: f64,
    pub ham_auc: Vec<f64>,
    pub flat_auc: Vec<f64>,
    pub margin: f64,
}

impl EvalReport {
    pub fn median_ham(&self) -> f64 {
        median(&self.ham_auc)
    }

    pub fn median_flat(&self) -> f64 {
        median(&self.flat_auc)
    }

    pub fn ratio(&self) -> f64 {
        self.median_ham() / self.median_flat()
    }

    pub fn dominates(&self) -> bool {
        self.median_ham() >= self.margin * self.median_flat()
    }
}

/// Normalizes both sets of curves by the best return seen on the test
/// environment and computes per-seed areas.
pub fn compare(
    test_env: BlocksConfig,
    ham: &mut [LearningCurve],
    flat: &mut [LearningCurve],
    margin: f64,
) -> Result<EvalReport> {
    let max = ham
        .iter()
        .chain(flat.iter())
        .map(|c| c.max_reward())
        .fold(f64::NEG_INFINITY, f64::max);
    normalize(max, max)?;
    for c in ham.iter_mut().chain(flat.iter_mut()) {
        c.normalize_by(max);
    }
    Ok(EvalReport {
        test_env,
        normalization: max,
        ham_auc: ham.iter().map(|c| c.area()).collect(),
        flat_auc: flat.iter().map(|c| c.area()).collect(),
        margin,
    })
}

fn env_label(c: &BlocksConfig) -> String {
    format!(
        "{}x{} cubes={} length={} target={}",
        c.grid_height, c.grid_width, c.num_cubes, c.episode_length, c.tower_target
    )
}

/// Everything `run` produces, in memory.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub baseline: Baseline,
    pub pruned: PrunedSet,
    pub searches: BTreeMap<ClusterKey, SearchResult>,
    pub solution: CombinedSolution,
    pub report: EvalReport,
}

/// Stage drivers over one configuration. Every random stream is derived from
/// the master seed, a stage tag and an item index.
pub struct Pipeline {
    pub config: ExperimentConfig,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config })
    }

    fn master(&self) -> u64 {
        self.config.experiment.master_seed
    }

    pub fn clusters(&self) -> Vec<ClusterKey> {
        ClusterKey::represented_in(&self.config.envs.training)
    }

    pub fn candidates(&self) -> Vec<MachineGraph> {
        let stream = enumerate_machines(&self.config.gen.params());
        match self.config.gen.max_candidates {
            0 => stream.collect(),
            n => stream.take(n).collect(),
        }
    }

    pub fn baseline(&self) -> Result<Baseline> {
        let cfg = &self.config;
        train_baseline(
            &cfg.training_envs(),
            cfg.prune.baseline_episodes,
            &cfg.prune.budget(),
            cfg.hyper(),
            derive_seed(self.master(), "baseline", 0),
        )
        .map_err(|e| e.in_stage("baseline"))
    }

    pub fn prune(&self, baseline: &Baseline, candidates: Vec<MachineGraph>) -> PrunedSet {
        let cfg = &self.config;
        prune(
            candidates,
            &self.clusters(),
            baseline,
            &cfg.training_envs(),
            &cfg.prune.budget(),
            derive_seed(self.master(), "prune", 0),
        )
    }

    /// Structure search for each of `clusters`, independently.
    pub fn discover(
        &self,
        baseline: &Baseline,
        pruned: &PrunedSet,
        clusters: &[ClusterKey],
    ) -> Result<BTreeMap<ClusterKey, SearchResult>> {
        let cfg = &self.config;
        let all = self.clusters();
        let fallback = enumerate_vertex_sets(&cfg.gen.params());
        clusters
            .par_iter()
            .map(|&cluster| {
                let index = all.iter().position(|&c| c == cluster).unwrap_or(all.len()) as u64;
                let mut multisets = pruned.multisets_for(cluster);
                if multisets.is_empty() {
                    multisets = fallback.clone();
                }
                let n_steps = cfg.internal.n_steps.unwrap_or_else(|| default_n_steps(&multisets));
                let mut ctx = EpisodeContext::new(
                    cluster,
                    cfg.training_envs(),
                    n_steps,
                    derive_seed(self.master(), "internal", index),
                );
                ctx.n_episodes = cfg.internal.n_episodes;
                ctx.reward_trials = cfg.internal.reward_trials;
                ctx.theta_f = cfg.internal.theta_f;
                ctx.penalty = cfg.internal.penalty;
                let mut env = InternalEnv::new(ctx, baseline, multisets)?;
                let seed = derive_seed(self.master(), "search", index);
                let result = search_structure(&mut env, cfg.internal.search_episodes, cfg.internal.hyper(), seed)?;
                Ok((cluster, result))
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().collect())
            .map_err(|e: Error| e.in_stage("discover"))
    }

    pub fn combine_context(&self, baseline_max: Vec<f64>) -> CombineContext {
        let cfg = &self.config;
        CombineContext {
            envs: cfg.training_envs(),
            baseline_max,
            episodes: cfg.combine.episodes,
            trials: cfg.combine.trials,
            hyper: cfg.hyper(),
            seed: derive_seed(self.master(), "combine", 0),
        }
    }

    pub fn combine(
        &self,
        per_cluster_best: &BTreeMap<ClusterKey, (MachineGraph, f64)>,
        baseline_max: Vec<f64>,
    ) -> Result<CombinedSolution> {
        combine(per_cluster_best, &self.clusters(), &self.combine_context(baseline_max))
            .map_err(|e| e.in_stage("combine"))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.config.experiment.seeds)
            .map(|i| eval_seed(self.master(), i))
            .collect()
    }

    /// HAM and flat curves on the test environment plus their comparison.
    pub fn evaluate(
        &self,
        solution: &CombinedSolution,
    ) -> Result<(Vec<LearningCurve>, Vec<LearningCurve>, EvalReport)> {
        let cfg = &self.config;
        let run = || -> Result<_> {
            let env = cfg.test_env();
            let seeds = self.seeds();
            let mut ham = evaluate(
                solution,
                &env,
                cfg.eval.episodes,
                &seeds,
                cfg.hyper(),
                cfg.eval.epsilon_final,
            )?;
            let mut flat = evaluate_flat(&env, cfg.eval.episodes, &seeds, cfg.hyper(), cfg.eval.epsilon_final)?;
            let report = compare(cfg.envs.test, &mut ham, &mut flat, cfg.eval.margin)?;
            Ok((ham, flat, report))
        };
        run().map_err(|e| e.in_stage("eval"))
    }

    /// Runs every stage, writing artifacts to `out` as each completes.
    pub fn run(&self, out: &Path) -> Result<ExperimentOutcome> {
        let art = Artifacts::create(out)?;
        art.write("config.toml", &self.config.to_toml())?;

        let candidates = self.candidates();
        art.write_generated(&candidates)?;

        let baseline = self.baseline()?;
        art.write_baseline(&self.config, &baseline)?;

        let pruned = self.prune(&baseline, candidates);
        art.write_pruned(&pruned)?;

        let searches = self.discover(&baseline, &pruned, &self.clusters())?;
        art.write_searches(&searches)?;

        let best = searches
            .iter()
            .map(|(&c, r)| (c, (r.best.clone(), r.best_r_int)))
            .collect();
        let solution = self.combine(&best, baseline.max_returns.clone())?;
        art.write_combined(&solution)?;

        let (ham, flat, report) = self.evaluate(&solution)?;
        art.write_eval(&ham, &flat, &report, &self.config, &baseline)?;

        Ok(ExperimentOutcome {
            baseline,
            pruned,
            searches,
            solution,
            report,
        })
    }
}

/// Summary text for an evaluation.
pub fn summary_text(report: &EvalReport, config: &ExperimentConfig, baseline_max: &[f64]) -> String {
    let mut out = String::new();
    for (i, (c, m)) in config.envs.training.iter().zip(baseline_max).enumerate() {
        let _ = writeln!(out, "normalization training{i} {} max_return {m}", env_label(c));
    }
    let _ = writeln!(
        out,
        "normalization test {} max_return {}",
        env_label(&report.test_env),
        report.normalization
    );
    for (i, (h, f)) in report.ham_auc.iter().zip(&report.flat_auc).enumerate() {
        let _ = writeln!(out, "seed {i} ham_auc {h} flat_auc {f}");
    }
    let _ = writeln!(out, "median_ham_auc {}", report.median_ham());
    let _ = writeln!(out, "median_flat_auc {}", report.median_flat());
    let _ = writeln!(out, "ratio {}", report.ratio());
    let _ = writeln!(out, "margin {}", report.margin);
    let _ = writeln!(out, "dominance {}", if report.dominates() { "pass" } else { "fail" });
    out
}
