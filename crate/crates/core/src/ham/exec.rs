use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use super::{MachineId, MachineLibrary, VertexKind};
use crate::blocks::{EnvSession, ObservationKey};
use crate::error::{Error, Result};
use crate::learning::{blend, discount_pow, epsilon_greedy};

/// Maximum nesting of Call vertices.
pub const MAX_CALL_DEPTH: usize = 64;
/// Vertex transitions allowed without a primitive action before the run is
/// abandoned (e.g. a dispatcher calling a machine that never acts).
pub const LIVELOCK_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChoiceKey {
    pub obs: ObservationKey,
    pub machine: MachineId,
    pub vertex: u16,
    pub successor: u16,
}

/// Q-values for Choice vertices, keyed by observation, choice vertex and
/// chosen successor. Missing entries read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceQTable {
    values: HashMap<ChoiceKey, f64>,
    alpha: f64,
    gamma: f64,
}

impl ChoiceQTable {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        ChoiceQTable {
            values: HashMap::new(),
            alpha,
            gamma,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn get(&self, key: &ChoiceKey) -> f64 {
        self.values.get(key).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, key: ChoiceKey, value: f64) {
        self.values.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ChoiceKey, &f64)> {
        self.values.iter()
    }

    fn key(obs: ObservationKey, machine: MachineId, vertex: usize, successor: usize) -> ChoiceKey {
        ChoiceKey {
            obs,
            machine,
            vertex: vertex as u16,
            successor: successor as u16,
        }
    }

    pub fn value(&self, obs: ObservationKey, machine: MachineId, vertex: usize, successor: usize) -> f64 {
        self.get(&Self::key(obs, machine, vertex, successor))
    }

    pub fn max_value(&self, obs: ObservationKey, machine: MachineId, vertex: usize, successors: &[usize]) -> f64 {
        successors
            .iter()
            .map(|&s| self.value(obs, machine, vertex, s))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Choice vertex `vertex` of machine `machine`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoicePoint {
    pub machine: MachineId,
    pub vertex: usize,
}

/// SMDP update between two Choice visits:
/// `Q(s,C,e) <- (1-a) Q(s,C,e) + a (r_c + g^tau max_e' Q(s',C',e'))`,
/// where `r_c` is already discounted inside the interval. `next` is `None`
/// when the episode ended, in which case the target is `r_c` alone.
#[allow(clippy::too_many_arguments)]
pub fn choice_update(
    table: &mut ChoiceQTable,
    s: ObservationKey,
    choice: ChoicePoint,
    edge: usize,
    r_c: f64,
    tau: u32,
    next: Option<(ObservationKey, ChoicePoint, &[usize])>,
) {
    let target = match next {
        Some((s_next, c_next, successors)) => {
            r_c + discount_pow(table.gamma, tau) * table.max_value(s_next, c_next.machine, c_next.vertex, successors)
        }
        None => r_c,
    };
    let key = ChoiceQTable::key(s, choice.machine, choice.vertex, edge);
    let q = table.get(&key);
    table.set(key, blend(q, table.alpha, target));
}

#[derive(Debug, Clone)]
struct Pending {
    obs: ObservationKey,
    point: ChoicePoint,
    successor: usize,
    r_c: f64,
    discount: f64,
    tau: u32,
}

/// Owns a choice Q-table and the bookkeeping between consecutive Choice
/// visits. Machines listed as frozen pick greedily and are never updated.
#[derive(Debug, Clone)]
pub struct ChoiceLearner {
    pub table: ChoiceQTable,
    pub epsilon: f64,
    pub learn: bool,
    frozen: BTreeSet<MachineId>,
    pending: Option<Pending>,
    scratch: Vec<f64>,
}

impl ChoiceLearner {
    pub fn new(table: ChoiceQTable, epsilon: f64, learn: bool) -> Self {
        ChoiceLearner {
            table,
            epsilon,
            learn,
            frozen: BTreeSet::new(),
            pending: None,
            scratch: Vec::new(),
        }
    }

    pub fn freeze(&mut self, machine: MachineId) {
        self.frozen.insert(machine);
    }

    pub fn is_frozen(&self, machine: MachineId) -> bool {
        self.frozen.contains(&machine)
    }

    fn writable(&self, machine: MachineId) -> bool {
        self.learn && !self.frozen.contains(&machine)
    }

    fn accrue(&mut self, reward: f64) {
        let gamma = self.table.gamma;
        if let Some(p) = self.pending.as_mut() {
            p.r_c += p.discount * reward;
            p.discount *= gamma;
            p.tau += 1;
        }
    }

    fn settle(&mut self, next: Option<(ObservationKey, ChoicePoint, &[usize])>) {
        if let Some(p) = self.pending.take() {
            // tau is zero when a Choice leads straight into another Choice.
            if self.writable(p.point.machine) {
                choice_update(&mut self.table, p.obs, p.point, p.successor, p.r_c, p.tau, next);
            }
        }
    }

    fn choose<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        obs: ObservationKey,
        point: ChoicePoint,
        successors: &[usize],
    ) -> usize {
        self.settle(Some((obs, point, successors)));
        self.scratch.clear();
        for &s in successors {
            self.scratch.push(self.table.value(obs, point.machine, point.vertex, s));
        }
        let eps = if self.frozen.contains(&point.machine) {
            0.0
        } else {
            self.epsilon
        };
        let pick = epsilon_greedy(rng, eps, &self.scratch);
        self.pending = Some(Pending {
            obs,
            point,
            successor: successors[pick],
            r_c: 0.0,
            discount: 1.0,
            tau: 0,
        });
        pick
    }

    /// Closes the episode: any open choice is credited with its reward so
    /// far and no bootstrap term.
    pub fn end_episode(&mut self) {
        self.settle(None);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunResult {
    /// Undiscounted sum of external rewards.
    pub total_reward: f64,
    pub discounted_return: f64,
    pub steps: usize,
    /// The environment ended the episode (as opposed to the machine stopping).
    pub terminated: bool,
    /// The run was abandoned after [`LIVELOCK_LIMIT`] transitions without an action.
    pub livelocked: bool,
}

/// Walks machine `root` from its Start vertex until it stops or the episode
/// ends. Entering an Action vertex performs the action; a Call runs the
/// callee to its Stop; a Choice picks a successor epsilon-greedily and, when
/// learning, credits the previous Choice visit.
///
/// A top-level Stop leaves the last choice open so that a following run in
/// the same episode continues the chain; call
/// [`ChoiceLearner::end_episode`] when the episode is abandoned.
pub fn run_machine<R: Rng + ?Sized>(
    root: MachineId,
    library: &MachineLibrary,
    session: &mut EnvSession,
    learner: &mut ChoiceLearner,
    rng: &mut R,
) -> Result<RunResult> {
    if session.is_done() {
        return Err(Error::EpisodeDone);
    }
    let gamma = learner.table.gamma;
    let mut result = RunResult::default();
    let mut discount = 1.0;
    let mut stack: Vec<(MachineId, usize)> = Vec::new();
    let mut machine_id = root;
    let mut machine = library.get(root).ok_or(Error::UnknownMachine(root))?;
    let mut v = machine.start;
    let mut idle = 0usize;

    loop {
        match machine.graph.kind(v) {
            VertexKind::Start => v = machine.succ[v][0],
            VertexKind::Action(action) => {
                let (reward, done) = session.step(action)?;
                result.total_reward += reward;
                result.discounted_return += discount * reward;
                discount *= gamma;
                result.steps += 1;
                learner.accrue(reward);
                idle = 0;
                if done {
                    learner.settle(None);
                    result.terminated = true;
                    return Ok(result);
                }
                v = machine.succ[v][0];
            }
            VertexKind::Choice => {
                let point = ChoicePoint {
                    machine: machine_id,
                    vertex: v,
                };
                let obs = session.observe();
                let succ = &machine.succ[v];
                let pick = learner.choose(rng, obs, point, succ);
                v = succ[pick];
            }
            VertexKind::Call(callee) => {
                if stack.len() >= MAX_CALL_DEPTH {
                    return Err(Error::CallDepth(MAX_CALL_DEPTH));
                }
                stack.push((machine_id, v));
                machine_id = callee;
                machine = library.get(callee).ok_or(Error::UnknownMachine(callee))?;
                v = machine.start;
            }
            VertexKind::Dispatch => {
                let table = machine.graph.dispatch().expect("validated dispatcher has a table");
                v = table.target(session.cluster());
            }
            VertexKind::Stop => match stack.pop() {
                Some((caller, call_vertex)) => {
                    machine_id = caller;
                    machine = library.get(caller).expect("caller is in the library");
                    v = machine.succ[call_vertex][0];
                }
                None => return Ok(result),
            },
        }
        idle += 1;
        if idle > LIVELOCK_LIMIT {
            learner.settle(None);
            result.livelocked = true;
            return Ok(result);
        }
    }
}
