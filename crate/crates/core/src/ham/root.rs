use std::collections::{BTreeMap, BTreeSet};

use super::{DispatchTable, MachineGraph, MachineId, MachineLibrary, VertexKind};
use crate::blocks::ClusterKey;
use crate::error::{Error, Result};

/// Builds the superior machine: `Start -> Dispatch -> Call(m) -> Dispatch`,
/// where Dispatch deterministically routes the current cluster to its
/// machine and unmapped clusters to `fallback`. It runs until the episode
/// ends; a callee is never interrupted by a cluster change.
pub fn build_root(
    cluster_map: &BTreeMap<ClusterKey, MachineId>,
    fallback: MachineId,
    library: &MachineLibrary,
) -> Result<MachineGraph> {
    let ids: BTreeSet<MachineId> = cluster_map.values().copied().chain([fallback]).collect();
    if let Some(&missing) = ids.iter().find(|&&id| library.get(id).is_none()) {
        return Err(Error::UnknownMachine(missing));
    }
    let mut g = MachineGraph::new(vec![VertexKind::Start, VertexKind::Dispatch]);
    let mut call_vertex = BTreeMap::new();
    for &id in &ids {
        let v = g.add_vertex(VertexKind::Call(id));
        g.add_edge(1, v);
        g.add_edge(v, 1);
        call_vertex.insert(id, v);
    }
    g.add_vertex(VertexKind::Stop);
    g.add_edge(0, 1);
    g.set_terminal_on_episode_end(true);
    g.set_dispatch(Some(DispatchTable {
        routes: cluster_map.iter().map(|(&c, id)| (c, call_vertex[id])).collect(),
        fallback: call_vertex[&fallback],
    }));
    Ok(g)
}
