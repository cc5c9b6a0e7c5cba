//! Graphviz export, plus a reader for files produced by [`to_dot`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{DispatchTable, MachineGraph, MachineId, VertexKind};
use crate::blocks::ClusterKey;
use crate::error::{Error, Result};

fn shape(kind: VertexKind) -> &'static str {
    match kind {
        VertexKind::Start | VertexKind::Stop => "doublecircle",
        VertexKind::Choice | VertexKind::Dispatch => "diamond",
        VertexKind::Action(_) => "box",
        VertexKind::Call(_) => "component",
    }
}

pub fn to_dot(g: &MachineGraph) -> String {
    let mut out = String::from("digraph machine {\n");
    if g.terminal_on_episode_end() {
        out.push_str("  graph [terminal_on_episode_end=true];\n");
    }
    for (id, &kind) in g.kinds().iter().enumerate() {
        let _ = writeln!(out, "  n{id} [label=\"{kind}\", shape={}];", shape(kind));
    }
    let mut routes: BTreeMap<usize, Vec<ClusterKey>> = BTreeMap::new();
    let mut fallback = None;
    if let Some(d) = g.dispatch() {
        for (&c, &t) in &d.routes {
            routes.entry(t).or_default().push(c);
        }
        fallback = Some(d.fallback);
    }
    let dispatcher = g.find(VertexKind::Dispatch);
    for &(a, b) in g.edges() {
        let mut attrs = Vec::new();
        if Some(a) == dispatcher {
            if let Some(cs) = routes.get(&b) {
                let list: Vec<String> = cs.iter().map(|c| format!("{}:{}", c.manip_height, c.holding)).collect();
                attrs.push(format!("routes=\"{}\"", list.join(" ")));
                attrs.push(format!("label=\"{}\"", list.join(" ")));
            }
            if fallback == Some(b) {
                attrs.push("fallback=true".into());
            }
        }
        if attrs.is_empty() {
            let _ = writeln!(out, "  n{a} -> n{b};");
        } else {
            let _ = writeln!(out, "  n{a} -> n{b} [{}];", attrs.join(", "));
        }
    }
    out.push_str("}\n");
    out
}

fn kind_from_label(label: &str) -> Option<VertexKind> {
    Some(match label {
        "Start" => VertexKind::Start,
        "Stop" => VertexKind::Stop,
        "Choice" => VertexKind::Choice,
        "Dispatch" => VertexKind::Dispatch,
        _ => {
            let inner = |prefix: &str| label.strip_prefix(prefix)?.strip_suffix(')');
            if let Some(a) = inner("Action(") {
                VertexKind::Action(a.parse().ok()?)
            } else {
                VertexKind::Call(MachineId(inner("Call(")?.parse().ok()?))
            }
        }
    })
}

fn attr<'a>(attrs: &'a str, key: &str) -> Option<&'a str> {
    let pos = attrs.find(&format!("{key}="))?;
    let rest = &attrs[pos + key.len() + 1..];
    if let Some(quoted) = rest.strip_prefix('"') {
        quoted.split('"').next()
    } else {
        rest.split([',', ']']).next().map(str::trim)
    }
}

fn node_id(tok: &str) -> Option<usize> {
    tok.trim().strip_prefix('n')?.parse().ok()
}

pub fn from_dot(text: &str) -> Result<MachineGraph> {
    let mut kinds: BTreeMap<usize, VertexKind> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut flagged = false;
    let mut routes = BTreeMap::new();
    let mut fallback = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: &str| Error::Parse { line, msg: msg.into() };
        let s = raw.trim().trim_end_matches(';');
        if s.is_empty() || s.starts_with("digraph") || s == "}" || s.starts_with("//") {
            continue;
        }
        let (head, attrs) = match s.find('[') {
            Some(p) => (s[..p].trim(), &s[p + 1..]),
            None => (s, ""),
        };
        if head == "graph" {
            flagged |= attr(attrs, "terminal_on_episode_end") == Some("true");
        } else if let Some((a, b)) = head.split_once("->") {
            let a = node_id(a).ok_or_else(|| err("bad edge source"))?;
            let b = node_id(b).ok_or_else(|| err("bad edge target"))?;
            edges.push((a, b));
            if let Some(list) = attr(attrs, "routes") {
                for item in list.split_whitespace() {
                    let (h, hold) = item.split_once(':').ok_or_else(|| err("bad route"))?;
                    let h = h.parse().map_err(|_| err("bad route height"))?;
                    let hold = hold.parse().map_err(|_| err("bad route flag"))?;
                    routes.insert(ClusterKey::new(h, hold), b);
                }
            }
            if attr(attrs, "fallback") == Some("true") {
                fallback = Some(b);
            }
        } else {
            let id = node_id(head).ok_or_else(|| err("bad node id"))?;
            let label = attr(attrs, "label").ok_or_else(|| err("node without label"))?;
            let kind = kind_from_label(label).ok_or_else(|| err("unknown vertex label"))?;
            kinds.insert(id, kind);
        }
    }
    if kinds.keys().enumerate().any(|(i, &k)| i != k) {
        return Err(Error::Parse {
            line: 0,
            msg: "node ids are not dense".into(),
        });
    }
    let mut g = MachineGraph::with_edges(kinds.into_values().collect(), edges);
    g.set_terminal_on_episode_end(flagged);
    if let Some(fallback) = fallback {
        g.set_dispatch(Some(DispatchTable { routes, fallback }));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlocksAction;

    #[test]
    fn action_vertices_are_labelled_with_action_name() {
        let g = MachineGraph::with_edges(
            vec![
                VertexKind::Start,
                VertexKind::Action(BlocksAction::Down),
                VertexKind::Stop,
            ],
            [(0, 1), (1, 2)],
        );
        let dot = to_dot(&g);
        assert!(dot.contains("label=\"Action(Down)\""));
        assert!(dot.contains("n0 -> n1;"));
        assert_eq!(from_dot(&dot).unwrap(), g);
    }
}
