//! Exhaustive generation of candidate machines under vertex budgets, the
//! standard machines, and canonical forms for deduplication.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use crate::blocks::BlocksAction;
use crate::error::{Error, Result};
use crate::ham::{to_text, validate, MachineGraph, MachineId, VertexKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenParams {
    /// Including Start and Stop.
    pub max_vertices: usize,
    pub max_actions_per_kind: BTreeMap<BlocksAction, usize>,
    pub max_choice: usize,
    pub include_call: bool,
    /// Machines a Call vertex may target when `include_call` is set; at most
    /// one Call per target.
    pub call_targets: Vec<MachineId>,
}

impl GenParams {
    /// Budget allowing up to `per_action` copies of each listed action.
    pub fn new(max_vertices: usize, actions: &[BlocksAction], per_action: usize, max_choice: usize) -> Self {
        GenParams {
            max_vertices,
            max_actions_per_kind: actions.iter().map(|&a| (a, per_action)).collect(),
            max_choice,
            include_call: false,
            call_targets: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_vertices < 2 {
            return Err(Error::Experiment("max_vertices must be at least 2".into()));
        }
        Ok(())
    }

    fn pool(&self) -> Vec<(VertexKind, usize)> {
        let mut pool = vec![(VertexKind::Choice, self.max_choice)];
        for (&a, &cap) in &self.max_actions_per_kind {
            pool.push((VertexKind::Action(a), cap));
        }
        if self.include_call {
            let mut targets = self.call_targets.clone();
            targets.sort();
            targets.dedup();
            pool.extend(targets.into_iter().map(|t| (VertexKind::Call(t), 1)));
        }
        pool.retain(|&(_, cap)| cap > 0);
        pool
    }
}

/// Sorted vertex kinds of a machine, Start first and Stop last.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexMultiset(pub Vec<VertexKind>);

impl VertexMultiset {
    pub fn from_inner(mut inner: Vec<VertexKind>) -> Self {
        inner.push(VertexKind::Start);
        inner.push(VertexKind::Stop);
        inner.sort();
        VertexMultiset(inner)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for VertexMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// All vertex multisets within budget, ordered by size and then
/// lexicographically by kind sequence.
pub fn enumerate_vertex_sets(params: &GenParams) -> Vec<VertexMultiset> {
    let pool = params.pool();
    let room = params.max_vertices.saturating_sub(2);
    let mut out = Vec::new();
    let mut counts = vec![0usize; pool.len()];
    loop {
        let total: usize = counts.iter().sum();
        if total <= room {
            let inner = pool
                .iter()
                .zip(&counts)
                .flat_map(|(&(k, _), &c)| std::iter::repeat_n(k, c))
                .collect();
            out.push(VertexMultiset::from_inner(inner));
        }
        // Odometer over per-kind counts.
        let mut i = 0;
        loop {
            if i == pool.len() {
                out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
                return out;
            }
            if counts[i] < pool[i].1 {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

fn subsets_of_size_at_least(items: &[usize], min: usize) -> Vec<Vec<usize>> {
    (0u32..1 << items.len())
        .filter(|m| m.count_ones() as usize >= min)
        .map(|m| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| m & (1 << i) != 0)
                .map(|(_, &t)| t)
                .collect()
        })
        .collect()
}

/// Out-edge options per vertex allowed by the degree rules alone.
pub(crate) fn out_options(kinds: &[VertexKind]) -> Vec<Vec<Vec<usize>>> {
    let n = kinds.len();
    let targets = |v: usize, allow_stop: bool| -> Vec<usize> {
        (0..n)
            .filter(|&t| t != v && kinds[t] != VertexKind::Start)
            .filter(|&t| allow_stop || kinds[t] != VertexKind::Stop)
            .collect()
    };
    (0..n)
        .map(|v| match kinds[v] {
            VertexKind::Stop => vec![Vec::new()],
            VertexKind::Choice => subsets_of_size_at_least(&targets(v, false), 2),
            VertexKind::Dispatch => subsets_of_size_at_least(&targets(v, true), 1),
            VertexKind::Start | VertexKind::Action(_) | VertexKind::Call(_) => {
                targets(v, true).into_iter().map(|t| vec![t]).collect()
            }
        })
        .collect()
}

/// Valid machines over one vertex multiset, deduplicated by canonical form
/// and relabeled canonically, in discovery order.
pub fn machines_for(multiset: &VertexMultiset) -> Vec<MachineGraph> {
    let kinds = &multiset.0;
    let options = out_options(kinds);
    if options.iter().any(|o| o.is_empty()) {
        return Vec::new();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut pick = vec![0usize; kinds.len()];
    loop {
        let edges = pick
            .iter()
            .enumerate()
            .flat_map(|(v, &i)| options[v][i].iter().map(move |&t| (v, t)));
        let g = MachineGraph::with_edges(kinds.clone(), edges);
        if validate(&g).is_valid() {
            let (canon, _) = canonicalize(&g);
            if seen.insert(to_text(&canon)) {
                out.push(canon);
            }
        }
        let mut i = 0;
        loop {
            if i == kinds.len() {
                return out;
            }
            pick[i] += 1;
            if pick[i] < options[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

/// Lazy stream of valid candidate machines, one multiset at a time.
pub struct CandidateStream {
    multisets: VecDeque<VertexMultiset>,
    buffer: VecDeque<MachineGraph>,
}

impl Iterator for CandidateStream {
    type Item = MachineGraph;

    fn next(&mut self) -> Option<MachineGraph> {
        loop {
            if let Some(g) = self.buffer.pop_front() {
                return Some(g);
            }
            let m = self.multisets.pop_front()?;
            self.buffer.extend(machines_for(&m));
        }
    }
}

pub fn enumerate_machines(params: &GenParams) -> CandidateStream {
    CandidateStream {
        multisets: enumerate_vertex_sets(params).into(),
        buffer: VecDeque::new(),
    }
}

/// Number of distinct valid machines per multiset.
pub fn count_by_multiset(params: &GenParams) -> Vec<(VertexMultiset, usize)> {
    enumerate_vertex_sets(params)
        .into_iter()
        .map(|m| {
            let n = machines_for(&m).len();
            (m, n)
        })
        .collect()
}

fn sorted_actions(actions: &[BlocksAction]) -> Result<Vec<BlocksAction>> {
    let mut acts = actions.to_vec();
    acts.sort();
    acts.dedup();
    if acts.len() < 2 {
        return Err(Error::InvalidMachine(
            "a standard machine needs at least two actions for its Choice".into(),
        ));
    }
    Ok(acts)
}

/// The looping standard machine: one Choice over every action, each action
/// returning to the Choice. It runs until the episode ends, so its Stop is
/// isolated and the machine carries the `terminal_on_episode_end` flag.
pub fn build_standard_machine(actions: &[BlocksAction]) -> Result<MachineGraph> {
    let acts = sorted_actions(actions)?;
    let mut g = MachineGraph::new(vec![VertexKind::Start, VertexKind::Choice]);
    g.add_edge(0, 1);
    for a in acts {
        let v = g.add_vertex(VertexKind::Action(a));
        g.add_edge(1, v);
        g.add_edge(v, 1);
    }
    g.add_vertex(VertexKind::Stop);
    g.set_terminal_on_episode_end(true);
    Ok(g)
}

/// Standard machine for use under a dispatcher: one Choice, one action,
/// then Stop, so control returns to the dispatcher after every step.
pub fn build_standard_step_machine(actions: &[BlocksAction]) -> Result<MachineGraph> {
    let acts = sorted_actions(actions)?;
    let stop = acts.len() + 2;
    let mut g = MachineGraph::new(vec![VertexKind::Start, VertexKind::Choice]);
    g.add_edge(0, 1);
    for a in acts {
        let v = g.add_vertex(VertexKind::Action(a));
        g.add_edge(1, v);
        g.add_edge(v, stop);
    }
    g.add_vertex(VertexKind::Stop);
    Ok(g)
}

/// Canonical encoding: the canonical text of the canonically relabeled graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm(pub String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn hash64(&self) -> u64 {
        crate::learning::fnv1a(self.0.as_bytes())
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_form(g: &MachineGraph) -> CanonicalForm {
    CanonicalForm(to_text(&canonicalize(g).0))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

type EdgeKey = (
    Vec<(usize, usize)>,
    Vec<(crate::blocks::ClusterKey, usize)>,
    Option<usize>,
);

/// Relabels `g` canonically. Vertices are grouped by (kind, out-degree,
/// in-degree, dispatch routes); the labeling within each group is the one
/// minimizing the sorted edge list. Returns the relabeled graph and the
/// permutation `old id -> new id`.
pub fn canonicalize(g: &MachineGraph) -> (MachineGraph, Vec<usize>) {
    let n = g.len();
    let mut outd = vec![0usize; n];
    let mut ind = vec![0usize; n];
    for &(a, b) in g.edges() {
        if a < n && b < n {
            outd[a] += 1;
            ind[b] += 1;
        }
    }
    let route_sig = |v: usize| -> (Vec<crate::blocks::ClusterKey>, bool) {
        match g.dispatch() {
            Some(d) => (
                d.routes.iter().filter(|(_, &t)| t == v).map(|(&c, _)| c).collect(),
                d.fallback == v,
            ),
            None => (Vec::new(), false),
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    let sig = |v: usize| (g.kind(v), outd[v], ind[v], route_sig(v));
    order.sort_by_key(|&v| sig(v));

    // Cells of vertices sharing an invariant signature, with their base position.
    let mut cells: Vec<(usize, Vec<usize>)> = Vec::new();
    for (pos, &v) in order.iter().enumerate() {
        match cells.last_mut() {
            Some((_, members)) if sig(members[0]) == sig(v) => members.push(v),
            _ => cells.push((pos, vec![v])),
        }
    }
    let cell_perms: Vec<Vec<Vec<usize>>> = cells.iter().map(|(_, m)| permutations(m)).collect();

    let encode = |perm: &[usize]| -> EdgeKey {
        let mut edges: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .filter(|&&(a, b)| a < n && b < n)
            .map(|&(a, b)| (perm[a], perm[b]))
            .collect();
        edges.sort_unstable();
        let (routes, fallback) = match g.dispatch() {
            Some(d) => (
                d.routes.iter().map(|(&c, &t)| (c, perm[t])).collect(),
                Some(perm[d.fallback]),
            ),
            None => (Vec::new(), None),
        };
        (edges, routes, fallback)
    };

    let mut best: Option<(EdgeKey, Vec<usize>)> = None;
    let mut idx = vec![0usize; cells.len()];
    let mut perm = vec![0usize; n];
    loop {
        for (c, (base, _)) in cells.iter().enumerate() {
            for (off, &v) in cell_perms[c][idx[c]].iter().enumerate() {
                perm[v] = base + off;
            }
        }
        let key = encode(&perm);
        if best.as_ref().is_none_or(|(b, _)| key < *b) {
            best = Some((key, perm.clone()));
        }
        let mut c = 0;
        loop {
            if c == cells.len() {
                let perm = best.map(|(_, p)| p).unwrap_or_default();
                return (g.permuted(&perm), perm);
            }
            idx[c] += 1;
            if idx[c] < cell_perms[c].len() {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
}
