use std::fmt;

use super::{MachineGraph, VertexKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DanglingEdge {
        from: usize,
        to: usize,
    },
    StartCount(usize),
    StopCount(usize),
    DispatchCount(usize),
    StartOutDegree(usize),
    StartInDegree(usize),
    StopOutDegree(usize),
    StopInDegree(usize),
    /// Only reported by strict validation: more than one edge into Stop.
    StopMultipleIncoming(usize),
    SingleOutDegree {
        vertex: usize,
        found: usize,
    },
    ChoiceOutDegree {
        vertex: usize,
        found: usize,
    },
    DispatchOutDegree(usize),
    DispatchRoute {
        target: usize,
    },
    SelfLoop(usize),
    ChoiceToStop {
        from: usize,
    },
    Disconnected,
    Unreachable(usize),
    CannotReachStop(usize),
    ChoiceCycle(Vec<usize>),
}

impl Violation {
    /// Short stable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::DanglingEdge { .. } => "dangling-edge",
            Violation::StartCount(_) => "start-count",
            Violation::StopCount(_) => "stop-count",
            Violation::DispatchCount(_) => "dispatch-count",
            Violation::StartOutDegree(_) => "start-out-degree",
            Violation::StartInDegree(_) => "start-in-degree",
            Violation::StopOutDegree(_) => "stop-out-degree",
            Violation::StopInDegree(_) => "stop-in-degree",
            Violation::StopMultipleIncoming(_) => "stop-multiple-incoming",
            Violation::SingleOutDegree { .. } => "single-out-degree",
            Violation::ChoiceOutDegree { .. } => "choice-out-degree",
            Violation::DispatchOutDegree(_) => "dispatch-out-degree",
            Violation::DispatchRoute { .. } => "dispatch-route",
            Violation::SelfLoop(_) => "self-loop",
            Violation::ChoiceToStop { .. } => "choice-to-stop",
            Violation::Disconnected => "disconnected",
            Violation::Unreachable(_) => "unreachable",
            Violation::CannotReachStop(_) => "cannot-reach-stop",
            Violation::ChoiceCycle(_) => "choice-cycle",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingEdge { from, to } => write!(f, "{}: edge {from}->{to}", self.code()),
            Violation::SingleOutDegree { vertex, found } | Violation::ChoiceOutDegree { vertex, found } => {
                write!(f, "{}: vertex {vertex} has {found}", self.code())
            }
            Violation::DispatchRoute { target } => write!(f, "{}: {target}", self.code()),
            Violation::ChoiceToStop { from } => write!(f, "{}: from {from}", self.code()),
            Violation::ChoiceCycle(vs) => write!(f, "{}: {vs:?}", self.code()),
            Violation::Disconnected => f.write_str(self.code()),
            Violation::StartCount(n)
            | Violation::StopCount(n)
            | Violation::DispatchCount(n)
            | Violation::StartOutDegree(n)
            | Violation::StartInDegree(n)
            | Violation::StopOutDegree(n)
            | Violation::StopInDegree(n)
            | Violation::StopMultipleIncoming(n)
            | Violation::DispatchOutDegree(n)
            | Violation::SelfLoop(n)
            | Violation::Unreachable(n)
            | Violation::CannotReachStop(n) => write!(f, "{}: {n}", self.code()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Breaches of the single-incoming-edge rule for Stop; they do not make
    /// a machine invalid unless strict mode is requested.
    pub strict_violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_strictly_valid(&self) -> bool {
        self.violations.is_empty() && self.strict_violations.is_empty()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code() == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

fn reach(adj: &[Vec<usize>], from: usize, skip: Option<usize>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(v) = stack.pop() {
        for &t in &adj[v] {
            if !seen[t] && Some(t) != skip {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Finds one cycle made only of Choice vertices, if any.
fn choice_cycle(g: &MachineGraph, out: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = g.len();
    let mut mark = vec![Mark::New; n];
    for root in (0..n).filter(|&v| g.kind(v).is_choice()) {
        if mark[root] != Mark::New {
            continue;
        }
        // Iterative DFS restricted to Choice vertices.
        let mut path = vec![root];
        let mut cursor = vec![0usize];
        mark[root] = Mark::Open;
        while let Some(&v) = path.last() {
            let i = cursor.last_mut().unwrap();
            let next = out[v][*i..].iter().position(|&t| g.kind(t).is_choice());
            match next {
                Some(off) => {
                    let t = out[v][*i + off];
                    *i += off + 1;
                    match mark[t] {
                        Mark::Open => {
                            let at = path.iter().position(|&p| p == t).unwrap();
                            return Some(path[at..].to_vec());
                        }
                        Mark::New => {
                            mark[t] = Mark::Open;
                            path.push(t);
                            cursor.push(0);
                        }
                        Mark::Done => {}
                    }
                }
                None => {
                    mark[v] = Mark::Done;
                    path.pop();
                    cursor.pop();
                }
            }
        }
    }
    None
}

/// Checks every structural rule and reports all violations. Stop may have
/// several incoming edges; the single-edge rule is reported separately in
/// [`ValidationReport::strict_violations`].
pub fn validate(g: &MachineGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let n = g.len();

    let mut out = vec![Vec::new(); n];
    let mut inc = vec![Vec::new(); n];
    for &(a, b) in g.edges() {
        if a >= n || b >= n {
            v.push(Violation::DanglingEdge { from: a, to: b });
            continue;
        }
        out[a].push(b);
        inc[b].push(a);
    }
    if !v.is_empty() {
        return report;
    }

    let count = |kind: VertexKind| g.kinds().iter().filter(|&&k| k == kind).count();
    let (starts, stops, dispatches) = (
        count(VertexKind::Start),
        count(VertexKind::Stop),
        count(VertexKind::Dispatch),
    );
    if starts != 1 {
        v.push(Violation::StartCount(starts));
    }
    if stops != 1 {
        v.push(Violation::StopCount(stops));
    }
    if dispatches > 1 {
        v.push(Violation::DispatchCount(dispatches));
    }
    let flagged = g.terminal_on_episode_end();

    for x in 0..n {
        if out[x].contains(&x) {
            v.push(Violation::SelfLoop(x));
        }
        let (o, i) = (out[x].len(), inc[x].len());
        match g.kind(x) {
            VertexKind::Start => {
                if o != 1 {
                    v.push(Violation::StartOutDegree(o));
                }
                if i != 0 {
                    v.push(Violation::StartInDegree(i));
                }
            }
            VertexKind::Stop => {
                if o != 0 {
                    v.push(Violation::StopOutDegree(o));
                }
                if i == 0 && !flagged {
                    v.push(Violation::StopInDegree(i));
                }
                if i > 1 {
                    report.strict_violations.push(Violation::StopMultipleIncoming(i));
                }
            }
            VertexKind::Action(_) | VertexKind::Call(_) => {
                if o != 1 {
                    v.push(Violation::SingleOutDegree { vertex: x, found: o });
                }
            }
            VertexKind::Choice => {
                if o < 2 {
                    v.push(Violation::ChoiceOutDegree { vertex: x, found: o });
                }
                if out[x].iter().any(|&t| g.kind(t) == VertexKind::Stop) {
                    v.push(Violation::ChoiceToStop { from: x });
                }
            }
            VertexKind::Dispatch => {
                if o == 0 {
                    v.push(Violation::DispatchOutDegree(o));
                }
                match g.dispatch() {
                    Some(table) => {
                        for &t in table.routes.values().chain(std::iter::once(&table.fallback)) {
                            if !out[x].contains(&t) {
                                v.push(Violation::DispatchRoute { target: t });
                            }
                        }
                    }
                    None => v.push(Violation::DispatchRoute { target: x }),
                }
            }
        }
    }

    // A flagged machine may leave Stop isolated; it is then left out of
    // the connectivity rules.
    let stop = g.stop();
    let skip = if flagged { stop } else { None };
    let live: Vec<usize> = (0..n).filter(|&x| Some(x) != skip).collect();

    if n > 0 {
        let undirected: Vec<Vec<usize>> = (0..n)
            .map(|x| out[x].iter().chain(inc[x].iter()).copied().collect())
            .collect();
        if let Some(&first) = live.first() {
            let seen = reach(&undirected, first, skip);
            if live.iter().any(|&x| !seen[x]) {
                v.push(Violation::Disconnected);
            }
        }
    }

    if starts == 1 {
        let s = g.start().unwrap();
        let seen = reach(&out, s, skip);
        for &x in &live {
            if !seen[x] {
                v.push(Violation::Unreachable(x));
            }
        }
    }
    if stops == 1 && !flagged {
        let t = stop.unwrap();
        let seen = reach(&inc, t, None);
        for (x, _) in seen.iter().enumerate().filter(|(_, &r)| !r) {
            v.push(Violation::CannotReachStop(x));
        }
    }
    if let Some(cycle) = choice_cycle(g, &out) {
        v.push(Violation::ChoiceCycle(cycle));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlocksAction::*;
    use crate::ham::VertexKind::*;

    #[test]
    fn minimal_chain_is_valid() {
        let g = MachineGraph::with_edges(vec![Start, Action(Right), Stop], [(0, 1), (1, 2)]);
        let r = validate(&g);
        assert!(r.is_strictly_valid(), "{r}");
    }

    #[test]
    fn choice_to_stop_is_rejected() {
        let g = MachineGraph::with_edges(
            vec![Start, Choice, Action(Right), Stop],
            [(0, 1), (1, 2), (1, 3), (2, 3)],
        );
        assert!(validate(&g).has("choice-to-stop"));
    }

    #[test]
    fn choice_two_cycle_is_rejected() {
        // Choice 1 <-> Choice 2 with exits through actions.
        let g = MachineGraph::with_edges(
            vec![Start, Choice, Choice, Action(Right), Action(Down), Stop],
            [(0, 1), (1, 2), (2, 1), (1, 3), (2, 4), (3, 5), (4, 5)],
        );
        let r = validate(&g);
        assert!(r.has("choice-cycle"), "{r}");
        assert_eq!(r.violations.len(), 1, "{r}");
    }

    #[test]
    fn self_loop_is_rejected() {
        let g = MachineGraph::with_edges(vec![Start, Action(Up), Stop], [(0, 1), (1, 1), (1, 2)]);
        let r = validate(&g);
        assert!(r.has("self-loop"));
    }

    #[test]
    fn unreachable_and_dead_end_vertices() {
        let g = MachineGraph::with_edges(vec![Start, Action(Up), Action(Down), Stop], [(0, 1), (1, 3), (2, 1)]);
        let r = validate(&g);
        assert!(r.has("unreachable"));
        let g = MachineGraph::with_edges(
            vec![Start, Choice, Action(Up), Action(Down), Stop],
            [(0, 1), (1, 2), (1, 3), (2, 4), (3, 1)],
        );
        assert!(validate(&g).is_valid());
    }

    #[test]
    fn several_stop_edges_only_fail_strict_mode() {
        let g = MachineGraph::with_edges(
            vec![Start, Choice, Action(Up), Action(Down), Stop],
            [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)],
        );
        let r = validate(&g);
        assert!(r.is_valid());
        assert!(!r.is_strictly_valid());
        assert_eq!(r.strict_violations, vec![Violation::StopMultipleIncoming(2)]);
    }

    #[test]
    fn flagged_machine_may_isolate_stop() {
        let mut g = MachineGraph::with_edges(
            vec![Start, Choice, Action(Up), Action(Down), Stop],
            [(0, 1), (1, 2), (1, 3), (2, 1), (3, 1)],
        );
        assert!(!validate(&g).is_valid());
        g.set_terminal_on_episode_end(true);
        assert!(validate(&g).is_valid(), "{}", validate(&g));
    }

    #[test]
    fn empty_graph_reports_missing_endpoints() {
        let r = validate(&MachineGraph::new(vec![]));
        assert!(r.has("start-count") && r.has("stop-count"));
    }
}
