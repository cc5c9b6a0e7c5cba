//! The internal environment: states are machine graphs under construction,
//! actions pick a vertex multiset or add one edge, and the reward is the
//! external return the edited machine earns in its cluster.

use std::collections::HashMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blocks::{BlocksAction, ClusterKey};
use crate::dispatch::EnvSpec;
use crate::error::{Error, Result};
use crate::ham::{to_text, validate, MachineGraph, VertexKind};
use crate::learning::{blend, derive_seed, epsilon_greedy, Hyper};
use crate::machine_gen::{build_standard_step_machine, canonicalize, CanonicalForm, VertexMultiset};
use crate::pruning::{run_applicability, Baseline};

pub const DEFAULT_PENALTY: f64 = -1.0e6;

/// Binary training indicator attached to internal Q-entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FValue {
    Fail,
    Success,
}

impl FValue {
    pub const ALL: [FValue; 2] = [FValue::Fail, FValue::Success];
}

impl fmt::Display for FValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FValue::Fail => "fail",
            FValue::Success => "success",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InternalAction {
    /// Index into the context's multiset list; only legal as the first action.
    SelectVertexSet(usize),
    AddEdge(usize, usize),
}

impl fmt::Display for InternalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InternalAction::SelectVertexSet(i) => write!(f, "select({i})"),
            InternalAction::AddEdge(a, b) => write!(f, "edge({a},{b})"),
        }
    }
}

/// A graph under construction. `perm` maps vertex ids to their positions in
/// the canonical relabeling, so actions can be keyed independently of the
/// vertex numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalState {
    pub graph: MachineGraph,
    pub canonical: CanonicalForm,
    pub canonical_hash: u64,
    perm: Vec<usize>,
    selected: bool,
    /// Indicator from the evaluation that produced this state.
    pub f: Option<FValue>,
}

impl InternalState {
    /// The empty state at the start of an internal episode.
    pub fn fresh() -> Self {
        Self::from_graph(MachineGraph::new(Vec::new()), false, None)
    }

    /// A state whose vertex set has already been chosen.
    pub fn with_graph(graph: MachineGraph) -> Self {
        Self::from_graph(graph, true, None)
    }

    fn from_graph(graph: MachineGraph, selected: bool, f: Option<FValue>) -> Self {
        let (canon, perm) = canonicalize(&graph);
        let canonical = CanonicalForm(to_text(&canon));
        let canonical_hash = canonical.hash64();
        InternalState {
            graph,
            canonical,
            canonical_hash,
            perm,
            selected,
            f,
        }
    }

    pub fn is_selected(&self) -> bool {
        self.selected
    }

    /// `action` expressed in canonical vertex coordinates.
    pub fn canonical_action(&self, action: InternalAction) -> InternalAction {
        match action {
            InternalAction::AddEdge(a, b) => InternalAction::AddEdge(self.perm[a], self.perm[b]),
            other => other,
        }
    }
}

/// Legal actions: every multiset on the first step, afterwards every missing
/// edge allowed by the out-degree caps. Edges into Start, out of Stop, self
/// loops and Choice to Stop are never offered; Start, Action and Call
/// vertices accept a single out-edge.
pub fn get_possible_actions(state: &InternalState, multisets: &[VertexMultiset]) -> Vec<InternalAction> {
    if !state.selected {
        return (0..multisets.len()).map(InternalAction::SelectVertexSet).collect();
    }
    let g = &state.graph;
    let n = g.len();
    let mut out = Vec::new();
    for a in 0..n {
        let single = matches!(
            g.kind(a),
            VertexKind::Start | VertexKind::Action(_) | VertexKind::Call(_)
        );
        if g.kind(a) == VertexKind::Stop || (single && g.out_degree(a) >= 1) {
            continue;
        }
        for b in 0..n {
            if a == b || g.has_edge(a, b) || g.kind(b) == VertexKind::Start {
                continue;
            }
            if g.kind(a) == VertexKind::Choice && g.kind(b) == VertexKind::Stop {
                continue;
            }
            out.push(InternalAction::AddEdge(a, b));
        }
    }
    out
}

/// Upper bound on the edges a machine over `m` can hold under the caps.
pub fn max_edges(m: &VertexMultiset) -> usize {
    let n = m.len();
    m.0.iter()
        .map(|k| match k {
            VertexKind::Start | VertexKind::Action(_) | VertexKind::Call(_) => 1,
            VertexKind::Choice => n.saturating_sub(3),
            VertexKind::Dispatch => n.saturating_sub(2),
            VertexKind::Stop => 0,
        })
        .sum()
}

/// Default episode length: one selection plus the most edges any multiset
/// can carry.
pub fn default_n_steps(multisets: &[VertexMultiset]) -> usize {
    1 + multisets.iter().map(max_edges).max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeContext {
    pub cluster: ClusterKey,
    pub envs: Vec<EnvSpec>,
    /// Maximum internal actions per internal episode.
    pub n_steps: usize,
    /// External episodes per evaluation, per environment.
    pub n_episodes: usize,
    pub reward_trials: usize,
    /// Fraction of the normalized baseline maximum needed for F = success.
    pub theta_f: f64,
    pub penalty: f64,
    pub seed: u64,
}

impl EpisodeContext {
    pub fn new(cluster: ClusterKey, envs: Vec<EnvSpec>, n_steps: usize, seed: u64) -> Self {
        EpisodeContext {
            cluster,
            envs,
            n_steps,
            n_episodes: 100,
            reward_trials: 5,
            theta_f: 0.95,
            penalty: DEFAULT_PENALTY,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() || self.n_steps == 0 || self.n_episodes == 0 || self.reward_trials == 0 {
            return Err(Error::Experiment("internal context counts must be positive".into()));
        }
        Ok(())
    }
}

/// `success` iff the graph is valid and `r_int` reaches `theta_f` of the
/// normalized baseline maximum (1.0).
pub fn compute_f(graph: &MachineGraph, r_int: f64, ctx: &EpisodeContext) -> FValue {
    if r_int == ctx.penalty || !validate(graph).is_valid() {
        return FValue::Fail;
    }
    if r_int >= ctx.theta_f {
        FValue::Success
    } else {
        FValue::Fail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InternalQTable {
    values: HashMap<(u64, InternalAction, FValue), f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl InternalQTable {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        InternalQTable {
            values: HashMap::new(),
            alpha,
            gamma,
        }
    }

    pub fn get(&self, hash: u64, action: InternalAction, f: FValue) -> f64 {
        self.values.get(&(hash, action, f)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, hash: u64, action: InternalAction, f: FValue, v: f64) {
        self.values.insert((hash, action, f), v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of taking `action` in `state`: the best entry over both
    /// indicator outcomes.
    pub fn action_value(&self, state: &InternalState, action: InternalAction) -> f64 {
        let a = state.canonical_action(action);
        FValue::ALL
            .iter()
            .map(|&f| self.get(state.canonical_hash, a, f))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_value(&self, state: &InternalState, actions: &[InternalAction]) -> f64 {
        actions
            .iter()
            .map(|&a| self.action_value(state, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Q(s,a,F) <- (1-a) Q(s,a,F) + a (r_int + g max_{a',F'} Q(s',a',F'))`;
/// with no next actions the target is `r_int`.
pub fn internal_q_update(
    table: &mut InternalQTable,
    s: &InternalState,
    a: InternalAction,
    f: FValue,
    r_int: f64,
    s_next: &InternalState,
    next_actions: &[InternalAction],
) {
    let target = if next_actions.is_empty() {
        r_int
    } else {
        r_int + table.gamma * table.max_value(s_next, next_actions)
    };
    let key = s.canonical_action(a);
    let q = table.get(s.canonical_hash, key, f);
    table.set(s.canonical_hash, key, f, blend(q, table.alpha, target));
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub actions: Vec<InternalAction>,
    pub state: InternalState,
    pub r_int: f64,
    pub f: FValue,
}

/// Internal environment for one cluster. Evaluations are memoized by
/// canonical form and seeded from it, so equal structures score equally.
pub struct InternalEnv<'a> {
    pub ctx: EpisodeContext,
    pub baseline: &'a Baseline,
    pub multisets: Vec<VertexMultiset>,
    cache: HashMap<CanonicalForm, f64>,
}

impl<'a> InternalEnv<'a> {
    pub fn new(ctx: EpisodeContext, baseline: &'a Baseline, multisets: Vec<VertexMultiset>) -> Result<Self> {
        ctx.validate()?;
        if baseline.max_returns.len() != ctx.envs.len() {
            return Err(Error::Experiment(
                "baseline does not match the context environments".into(),
            ));
        }
        Ok(InternalEnv {
            ctx,
            baseline,
            multisets,
            cache: HashMap::new(),
        })
    }

    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }

    /// Mean normalized external return of `graph` serving the context's
    /// cluster, averaged over trials, environments and episodes; the
    /// penalty for invalid graphs.
    pub fn evaluate(&mut self, graph: &MachineGraph) -> f64 {
        if !validate(graph).is_valid() {
            return self.ctx.penalty;
        }
        let (canon, _) = canonicalize(graph);
        let form = CanonicalForm(to_text(&canon));
        if let Some(&r) = self.cache.get(&form) {
            return r;
        }
        let ctx = &self.ctx;
        let baseline = self.baseline;
        let base = derive_seed(ctx.seed, form.as_str(), 0);
        let trials: Vec<f64> = (0..ctx.reward_trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(base, "trial", t as u64);
                match run_applicability(
                    &canon,
                    ctx.cluster,
                    baseline,
                    &ctx.envs,
                    ctx.n_episodes,
                    ctx.n_episodes,
                    seed,
                ) {
                    Ok(run) => {
                        let n: usize = run.curves.iter().map(|c| c.len()).sum();
                        let sum: f64 = run
                            .curves
                            .iter()
                            .flat_map(|c| c.records.iter())
                            .map(|r| r.normalized)
                            .sum();
                        sum / n.max(1) as f64
                    }
                    Err(_) => ctx.penalty,
                }
            })
            .collect();
        let r = if trials.contains(&ctx.penalty) {
            ctx.penalty
        } else {
            trials.iter().sum::<f64>() / trials.len() as f64
        };
        self.cache.insert(form, r);
        r
    }

    pub fn actions(&self, state: &InternalState) -> Vec<InternalAction> {
        get_possible_actions(state, &self.multisets)
    }

    /// Applies `action`, evaluates the edited graph and returns the next
    /// legal actions with the reward and indicator.
    pub fn internal_step(&mut self, state: &InternalState, action: InternalAction) -> Result<StepOutcome> {
        if !self.actions(state).contains(&action) {
            return Err(Error::IllegalAction(action.to_string()));
        }
        let graph = match action {
            InternalAction::SelectVertexSet(i) => MachineGraph::new(self.multisets[i].0.clone()),
            InternalAction::AddEdge(a, b) => {
                let mut g = state.graph.clone();
                g.add_edge(a, b);
                g
            }
        };
        let r_int = self.evaluate(&graph);
        let f = compute_f(&graph, r_int, &self.ctx);
        let next = InternalState::from_graph(graph, true, Some(f));
        let actions = self.actions(&next);
        Ok(StepOutcome {
            actions,
            state: next,
            r_int,
            f,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchLogLine {
    pub episode: usize,
    pub step: usize,
    pub action: InternalAction,
    pub r_int: f64,
    pub f: FValue,
    pub best_so_far: f64,
}

impl fmt::Display for SearchLogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.episode, self.step, self.action, self.r_int, self.f, self.best_so_far
        )
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: MachineGraph,
    pub best_r_int: f64,
    /// Whether no searched machine beat the standard machine.
    pub is_standard: bool,
    pub log: Vec<SearchLogLine>,
    pub table: InternalQTable,
}

impl SearchResult {
    pub fn log_text(&self) -> String {
        let mut out = String::from("episode step action r_int F best_so_far\n");
        for line in &self.log {
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Runs `search_episodes` internal episodes of epsilon-greedy graph editing,
/// starting from the standard machine as the incumbent. The returned machine
/// has the highest evaluated return seen; ties keep the earlier one.
pub fn search_structure(
    env: &mut InternalEnv<'_>,
    search_episodes: usize,
    hyper: Hyper,
    seed: u64,
) -> Result<SearchResult> {
    let mut best = build_standard_step_machine(&BlocksAction::ALL)?;
    let mut best_r = env.evaluate(&best);
    let mut is_standard = true;
    let mut table = InternalQTable::new(hyper.alpha, hyper.gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        "search",
        env.ctx.cluster.manip_height as u64 * 2 + env.ctx.cluster.holding as u64,
    ));
    let mut log = Vec::new();
    let mut values = Vec::new();
    for episode in 0..search_episodes {
        let mut state = InternalState::fresh();
        let mut actions = env.actions(&state);
        for step in 0..env.ctx.n_steps {
            if actions.is_empty() {
                break;
            }
            values.clear();
            values.extend(actions.iter().map(|&a| table.action_value(&state, a)));
            let action = actions[epsilon_greedy(&mut rng, hyper.epsilon, &values)];
            let out = env.internal_step(&state, action)?;
            let last = step + 1 == env.ctx.n_steps;
            let next_actions: &[InternalAction] = if last { &[] } else { &out.actions };
            internal_q_update(&mut table, &state, action, out.f, out.r_int, &out.state, next_actions);
            if out.r_int != env.ctx.penalty && out.r_int > best_r {
                best_r = out.r_int;
                best = out.state.graph.clone();
                is_standard = false;
            }
            log.push(SearchLogLine {
                episode,
                step,
                action,
                r_int: out.r_int,
                f: out.f,
                best_so_far: best_r,
            });
            state = out.state;
            actions = out.actions;
        }
    }
    Ok(SearchResult {
        best: canonicalize(&best).0,
        best_r_int: best_r,
        is_standard,
        log,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlocksConfig;
    use crate::pruning::{train_baseline, ApplicabilityBudget};
    use BlocksAction::*;
    use VertexKind::*;

    fn tiny_ctx() -> (EpisodeContext, Baseline) {
        let envs = vec![EnvSpec::new(BlocksConfig::training_small(), 0)];
        let budget = ApplicabilityBudget {
            train_episodes: 20,
            eval_episodes: 1,
            convergence_window: 5,
            success_fraction: 0.9,
        };
        let baseline = train_baseline(&envs, 20, &budget, Hyper::default(), 3).unwrap();
        let mut ctx = EpisodeContext::new(ClusterKey::new(0, false), envs, 4, 1);
        ctx.n_episodes = 3;
        ctx.reward_trials = 2;
        (ctx, baseline)
    }

    fn chain_multiset() -> Vec<VertexMultiset> {
        vec![VertexMultiset::from_inner(vec![Action(Right)])]
    }

    #[test]
    fn fresh_state_offers_every_multiset() {
        let sets = vec![
            VertexMultiset::from_inner(vec![]),
            VertexMultiset::from_inner(vec![Choice]),
        ];
        let acts = get_possible_actions(&InternalState::fresh(), &sets);
        assert_eq!(
            acts,
            vec![InternalAction::SelectVertexSet(0), InternalAction::SelectVertexSet(1)]
        );
    }

    #[test]
    fn start_with_an_edge_offers_no_more() {
        let g = MachineGraph::with_edges(vec![Start, Action(Up), Action(Down), Stop], [(0, 1)]);
        let s = InternalState::from_graph(g, true, None);
        let acts = get_possible_actions(&s, &[]);
        assert!(acts.iter().all(|a| !matches!(a, InternalAction::AddEdge(0, _))));
        assert!(acts.contains(&InternalAction::AddEdge(1, 2)));
    }

    #[test]
    fn penalty_and_fail_for_invalid_step() {
        let (ctx, baseline) = tiny_ctx();
        let mut env = InternalEnv::new(ctx, &baseline, chain_multiset()).unwrap();
        let out = env
            .internal_step(&InternalState::fresh(), InternalAction::SelectVertexSet(0))
            .unwrap();
        assert_eq!(out.r_int, DEFAULT_PENALTY);
        assert_eq!(out.f, FValue::Fail);
        assert!(env.internal_step(&out.state, InternalAction::AddEdge(2, 0)).is_err());
    }

    #[test]
    fn completing_the_chain_is_evaluated() {
        let (ctx, baseline) = tiny_ctx();
        let mut env = InternalEnv::new(ctx, &baseline, chain_multiset()).unwrap();
        let s0 = InternalState::fresh();
        let s1 = env
            .internal_step(&s0, InternalAction::SelectVertexSet(0))
            .unwrap()
            .state;
        // Kinds sort as Start, Action(Right), Stop.
        let s2 = env.internal_step(&s1, InternalAction::AddEdge(0, 1)).unwrap();
        assert_eq!(s2.r_int, DEFAULT_PENALTY);
        let s3 = env.internal_step(&s2.state, InternalAction::AddEdge(1, 2)).unwrap();
        assert!(s3.r_int.is_finite() && s3.r_int != DEFAULT_PENALTY);
        assert_eq!(s3.state.canonical_hash, s3.state.canonical.hash64());
        assert_eq!(s3.state.graph.edge_count(), 2);
    }

    #[test]
    fn boundary_f_is_inclusive() {
        let (mut ctx, _) = tiny_ctx();
        ctx.theta_f = 1.0;
        let g = MachineGraph::with_edges(vec![Start, Action(Up), Stop], [(0, 1), (1, 2)]);
        assert_eq!(compute_f(&g, 1.0, &ctx), FValue::Success);
        assert_eq!(compute_f(&g, ctx.penalty, &ctx), FValue::Fail);
    }

    #[test]
    fn unit_alpha_zero_gamma_sets_reward() {
        let mut t = InternalQTable::new(1.0, 0.0);
        let s = InternalState::fresh();
        let a = InternalAction::SelectVertexSet(0);
        internal_q_update(&mut t, &s, a, FValue::Fail, 7.5, &s, &[a]);
        assert_eq!(t.get(s.canonical_hash, a, FValue::Fail), 7.5);
    }

    #[test]
    fn zero_budget_search_returns_standard_machine() {
        let (ctx, baseline) = tiny_ctx();
        let mut env = InternalEnv::new(ctx, &baseline, chain_multiset()).unwrap();
        let res = search_structure(&mut env, 0, Hyper::default(), 0).unwrap();
        assert!(res.is_standard);
        let std = canonicalize(&build_standard_step_machine(&BlocksAction::ALL).unwrap()).0;
        assert_eq!(res.best, std);
        assert!(res.log.is_empty());
    }

    #[test]
    fn search_is_deterministic_and_monotone() {
        let (ctx, baseline) = tiny_ctx();
        let run = || {
            let mut env = InternalEnv::new(ctx.clone(), &baseline, chain_multiset()).unwrap();
            search_structure(&mut env, 3, Hyper::default(), 9).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.best, b.best);
        assert_eq!(a.log_text(), b.log_text());
        assert!(a.log.windows(2).all(|w| w[0].best_so_far <= w[1].best_so_far));
    }
}
