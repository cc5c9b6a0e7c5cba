//! Abstract machines: typed vertex graphs whose Choice vertices are resolved
//! by learning, executed against the blocks environment.

mod dot;
mod exec;
mod root;
mod text;
mod validate;

pub use dot::{from_dot, to_dot};
pub use exec::{
    choice_update, run_machine, ChoiceKey, ChoiceLearner, ChoicePoint, ChoiceQTable, RunResult, LIVELOCK_LIMIT,
    MAX_CALL_DEPTH,
};
pub use root::build_root;
pub use text::{from_text, to_text};
pub use validate::{validate, ValidationReport, Violation};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::blocks::{BlocksAction, ClusterKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MachineId(pub u32);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// Vertex kinds. The derived order is the canonical block order used for
/// vertex multisets and canonical forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKind {
    Start,
    Choice,
    Action(BlocksAction),
    Call(MachineId),
    /// Deterministic cluster router, only used by root dispatchers.
    Dispatch,
    Stop,
}

impl VertexKind {
    pub fn is_choice(self) -> bool {
        matches!(self, VertexKind::Choice)
    }
}

impl fmt::Display for VertexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexKind::Start => f.write_str("Start"),
            VertexKind::Choice => f.write_str("Choice"),
            VertexKind::Action(a) => write!(f, "Action({a})"),
            VertexKind::Call(id) => write!(f, "Call({})", id.0),
            VertexKind::Dispatch => f.write_str("Dispatch"),
            VertexKind::Stop => f.write_str("Stop"),
        }
    }
}

/// Cluster routing for a Dispatch vertex: every target is a successor of
/// the dispatch vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DispatchTable {
    pub routes: BTreeMap<ClusterKey, usize>,
    pub fallback: usize,
}

impl DispatchTable {
    pub fn target(&self, cluster: ClusterKey) -> usize {
        self.routes.get(&cluster).copied().unwrap_or(self.fallback)
    }
}

/// A machine as a directed graph of typed vertices. Vertex ids are indices
/// into the vertex list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineGraph {
    kinds: Vec<VertexKind>,
    edges: BTreeSet<(usize, usize)>,
    terminal_on_episode_end: bool,
    dispatch: Option<DispatchTable>,
}

impl MachineGraph {
    pub fn new(kinds: Vec<VertexKind>) -> Self {
        MachineGraph {
            kinds,
            edges: BTreeSet::new(),
            terminal_on_episode_end: false,
            dispatch: None,
        }
    }

    pub fn with_edges(kinds: Vec<VertexKind>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new(kinds);
        g.edges.extend(edges);
        g
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[VertexKind] {
        &self.kinds
    }

    pub fn kind(&self, v: usize) -> VertexKind {
        self.kinds[v]
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn add_vertex(&mut self, kind: VertexKind) -> usize {
        self.kinds.push(kind);
        self.kinds.len() - 1
    }

    /// Inserts an edge; returns false if it was already present.
    pub fn add_edge(&mut self, from: usize, to: usize) -> bool {
        self.edges.insert((from, to))
    }

    pub fn successors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((v, 0)..(v + 1, 0)).map(|&(_, t)| t)
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.successors(v).count()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(_, t)| t == v).count()
    }

    pub fn find(&self, kind: VertexKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }

    pub fn start(&self) -> Option<usize> {
        self.find(VertexKind::Start)
    }

    pub fn stop(&self) -> Option<usize> {
        self.find(VertexKind::Stop)
    }

    /// Machines flagged this way run until the episode ends and are exempt
    /// from the Stop reachability rules.
    pub fn terminal_on_episode_end(&self) -> bool {
        self.terminal_on_episode_end
    }

    pub fn set_terminal_on_episode_end(&mut self, flag: bool) {
        self.terminal_on_episode_end = flag;
    }

    pub fn dispatch(&self) -> Option<&DispatchTable> {
        self.dispatch.as_ref()
    }

    pub fn set_dispatch(&mut self, table: Option<DispatchTable>) {
        self.dispatch = table;
    }

    pub fn choice_count(&self) -> usize {
        self.kinds.iter().filter(|k| k.is_choice()).count()
    }

    /// Relabels vertex `v` to `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> MachineGraph {
        let mut kinds = self.kinds.clone();
        for (v, &p) in perm.iter().enumerate() {
            kinds[p] = self.kinds[v];
        }
        MachineGraph {
            kinds,
            edges: self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect(),
            terminal_on_episode_end: self.terminal_on_episode_end,
            dispatch: self.dispatch.as_ref().map(|d| DispatchTable {
                routes: d.routes.iter().map(|(&c, &t)| (c, perm[t])).collect(),
                fallback: perm[d.fallback],
            }),
        }
    }

    pub fn called_machines(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.kinds.iter().filter_map(|k| match k {
            VertexKind::Call(id) => Some(*id),
            _ => None,
        })
    }
}

/// Precomputed adjacency for fast execution.
#[derive(Debug, Clone)]
pub(crate) struct CompiledMachine {
    pub graph: MachineGraph,
    pub start: usize,
    pub succ: Vec<Vec<usize>>,
}

/// Validated machines addressable by id.
#[derive(Debug, Clone, Default)]
pub struct MachineLibrary {
    machines: Vec<CompiledMachine>,
}

impl MachineLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and stores `graph`. Call targets must already be present,
    /// except for a call to the machine being inserted.
    pub fn insert(&mut self, graph: MachineGraph) -> Result<MachineId> {
        let report = validate(&graph);
        if !report.is_valid() {
            return Err(Error::InvalidMachine(report.to_string()));
        }
        let id = MachineId(self.machines.len() as u32);
        for callee in graph.called_machines() {
            if callee != id && self.get(callee).is_none() {
                return Err(Error::UnknownMachine(callee));
            }
        }
        let start = graph.start().expect("validated graph has a Start");
        let succ = (0..graph.len()).map(|v| graph.successors(v).collect()).collect();
        self.machines.push(CompiledMachine { graph, start, succ });
        Ok(id)
    }

    pub fn graph(&self, id: MachineId) -> Option<&MachineGraph> {
        self.get(id).map(|m| &m.graph)
    }

    pub(crate) fn get(&self, id: MachineId) -> Option<&CompiledMachine> {
        self.machines.get(id.0 as usize)
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }
}
