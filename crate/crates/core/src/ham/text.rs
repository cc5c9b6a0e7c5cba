//! Line-based machine format.
//!
//! ```text
//! opt terminal_on_episode_end
//! v 0 start
//! v 1 choice
//! v 2 action Right
//! v 3 call 4
//! v 4 dispatch
//! v 5 stop
//! e 0 1
//! d 2 true 3
//! d * 3
//! ```
//!
//! Vertex ids must be dense and listed in order. `d` lines route a cluster
//! (height, holding) of a dispatch vertex; `d *` is the fallback. Blank
//! lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{DispatchTable, MachineGraph, MachineId, VertexKind};
use crate::blocks::ClusterKey;
use crate::error::{Error, Result};

pub fn to_text(g: &MachineGraph) -> String {
    let mut out = String::new();
    if g.terminal_on_episode_end() {
        out.push_str("opt terminal_on_episode_end\n");
    }
    for (id, kind) in g.kinds().iter().enumerate() {
        let _ = match kind {
            VertexKind::Start => writeln!(out, "v {id} start"),
            VertexKind::Stop => writeln!(out, "v {id} stop"),
            VertexKind::Choice => writeln!(out, "v {id} choice"),
            VertexKind::Dispatch => writeln!(out, "v {id} dispatch"),
            VertexKind::Action(a) => writeln!(out, "v {id} action {a}"),
            VertexKind::Call(m) => writeln!(out, "v {id} call {}", m.0),
        };
    }
    for (a, b) in g.edges() {
        let _ = writeln!(out, "e {a} {b}");
    }
    if let Some(d) = g.dispatch() {
        for (c, t) in &d.routes {
            let _ = writeln!(out, "d {} {} {t}", c.manip_height, c.holding);
        }
        let _ = writeln!(out, "d * {}", d.fallback);
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        msg: format!("expected {what}"),
    })
}

pub fn from_text(text: &str) -> Result<MachineGraph> {
    let mut g = MachineGraph::new(Vec::new());
    let mut routes = BTreeMap::new();
    let mut fallback = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let err = |msg: String| Error::Parse { line, msg };
        match toks.next() {
            Some("opt") => match toks.next() {
                Some("terminal_on_episode_end") => g.set_terminal_on_episode_end(true),
                other => return Err(err(format!("unknown option {other:?}"))),
            },
            Some("v") => {
                let id: usize = parse_num(toks.next(), line, "vertex id")?;
                if id != g.len() {
                    return Err(err(format!("vertex id {id} out of order, expected {}", g.len())));
                }
                let kind = match toks.next() {
                    Some("start") => VertexKind::Start,
                    Some("stop") => VertexKind::Stop,
                    Some("choice") => VertexKind::Choice,
                    Some("dispatch") => VertexKind::Dispatch,
                    Some("action") => {
                        let name = toks.next().ok_or_else(|| err("missing action name".into()))?;
                        VertexKind::Action(name.parse().map_err(|_| err(format!("bad action `{name}`")))?)
                    }
                    Some("call") => VertexKind::Call(MachineId(parse_num(toks.next(), line, "machine id")?)),
                    other => return Err(err(format!("unknown vertex kind {other:?}"))),
                };
                g.add_vertex(kind);
            }
            Some("e") => {
                let a = parse_num(toks.next(), line, "edge source")?;
                let b = parse_num(toks.next(), line, "edge target")?;
                g.add_edge(a, b);
            }
            Some("d") => match toks.next() {
                Some("*") => fallback = Some(parse_num(toks.next(), line, "fallback vertex")?),
                h => {
                    let height = parse_num(h, line, "cluster height")?;
                    let holding = parse_num(toks.next(), line, "cluster holding flag")?;
                    let target = parse_num(toks.next(), line, "route target")?;
                    routes.insert(ClusterKey::new(height, holding), target);
                }
            },
            Some(other) => return Err(err(format!("unknown record `{other}`"))),
            None => unreachable!(),
        }
        if toks.next().is_some() {
            return Err(Error::Parse {
                line,
                msg: "trailing tokens".into(),
            });
        }
    }
    match fallback {
        Some(fallback) => g.set_dispatch(Some(DispatchTable { routes, fallback })),
        None if !routes.is_empty() => {
            return Err(Error::Parse {
                line: 0,
                msg: "dispatch routes without `d *` fallback".into(),
            })
        }
        None => {}
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlocksAction;

    #[test]
    fn chain_text_is_stable() {
        let g = MachineGraph::with_edges(
            vec![
                VertexKind::Start,
                VertexKind::Action(BlocksAction::Right),
                VertexKind::Stop,
            ],
            [(0, 1), (1, 2)],
        );
        let text = to_text(&g);
        assert_eq!(text, "v 0 start\nv 1 action Right\nv 2 stop\ne 0 1\ne 1 2\n");
        assert_eq!(from_text(&text).unwrap(), g);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = from_text("v 0 start\nv 2 stop\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = from_text("v 0 start\n# ok\nv 1 action Sideways\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(from_text("x 1").is_err());
    }
}
