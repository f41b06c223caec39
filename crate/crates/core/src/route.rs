//! Routing of cat-state multicasts and teleportation moves on the channel graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hw::{ChannelKind, HardwareModel, WeightedGraph};
use crate::ir::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    /// Minimum spanning trees inside a cluster, one relay per remote cluster.
    #[default]
    Mst,
    /// Union of independent shortest paths.
    Shortest,
    /// Like `Mst`, but spreads a block's inter-cluster transfers over
    /// distinct channels when possible.
    Parallel,
}

impl Routing {
    pub fn parse(s: &str) -> Option<Routing> {
        match s {
            "mst" => Some(Routing::Mst),
            "shortest" => Some(Routing::Shortest),
            "parallel" => Some(Routing::Parallel),
            _ => None,
        }
    }
}

/// A routing tree, edges directed away from the source.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RoutePlan {
    pub edges: Vec<(NodeId, NodeId)>,
    pub relays: Vec<NodeId>,
    pub epr: usize,
    pub cross: usize,
    pub fidelity: f64,
    pub weight: f64,
}

impl RoutePlan {
    fn from_edges(model: &HardwareModel, src: NodeId, undirected: &[(NodeId, NodeId)], terminals: &BTreeSet<NodeId>) -> RoutePlan {
        let edges = orient(src, undirected);
        let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
        let mut fidelity = 1.0;
        let mut weight = 0.0;
        let mut cross = 0;
        for &(a, b) in &edges {
            nodes.insert(a);
            nodes.insert(b);
            let c = model.channel(a, b).expect("route uses existing channels");
            fidelity *= c.fidelity;
            weight += -c.fidelity.ln();
            if c.kind == ChannelKind::Inter {
                cross += 1;
            }
        }
        let relays = nodes.into_iter().filter(|v| !terminals.contains(v)).collect();
        RoutePlan { epr: edges.len(), edges, relays, cross, fidelity, weight }
    }
}

/// BFS orientation from `src`; children visited in ascending id order.
fn orient(src: NodeId, undirected: &[(NodeId, NodeId)]) -> Vec<(NodeId, NodeId)> {
    let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for &(a, b) in undirected {
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::from([src]);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(&u).into_iter().flatten() {
            if seen.insert(v) {
                out.push((u, v));
                queue.push_back(v);
            }
        }
    }
    out
}

fn find(p: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while p[r] != r {
        r = p[r];
    }
    let mut y = x;
    while p[y] != r {
        let n = p[y];
        p[y] = r;
        y = n;
    }
    r
}

/// Kruskal over the subgraph induced by `nodes`; edge ties broken by lower
/// node-id pair. Returns the forest and its weight.
pub fn kruskal(g: &WeightedGraph, nodes: &BTreeSet<NodeId>) -> (Vec<(NodeId, NodeId)>, f64, bool) {
    let mut edges: Vec<(f64, NodeId, NodeId)> = g
        .edges
        .iter()
        .filter(|(a, b, _)| nodes.contains(a) && nodes.contains(b))
        .map(|&(a, b, w)| (w, a, b))
        .collect();
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut parent: Vec<usize> = (0..g.n).collect();
    let mut out = Vec::new();
    let mut w = 0.0;
    for (ew, a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            out.push((a, b));
            w += ew;
        }
    }
    let connected = out.len() + 1 == nodes.len() || nodes.len() <= 1;
    (out, w, connected)
}

/// Strip relay leaves repeatedly.
fn prune(edges: &mut Vec<(NodeId, NodeId)>, terminals: &BTreeSet<NodeId>) {
    loop {
        let mut deg: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &(a, b) in edges.iter() {
            *deg.entry(a).or_default() += 1;
            *deg.entry(b).or_default() += 1;
        }
        let before = edges.len();
        edges.retain(|&(a, b)| {
            let leaf = |v: NodeId| deg[&v] == 1 && !terminals.contains(&v);
            !(leaf(a) || leaf(b))
        });
        if edges.len() == before {
            break;
        }
    }
}

fn tree_weight(g: &WeightedGraph, edges: &[(NodeId, NodeId)]) -> f64 {
    edges.iter().map(|&(a, b)| g.weight(a, b)).sum()
}

/// MST multicast inside one cluster, admitting a relay from `candidates`
/// only when it lowers the tree weight (or is needed for connectivity).
pub fn mst_route(
    model: &HardwareModel,
    src: NodeId,
    dests: &BTreeSet<NodeId>,
    candidates: &[NodeId],
) -> Result<RoutePlan> {
    let g = model.path_graph();
    let (edges, _) = steiner(&g, src, dests, candidates)?;
    let mut terminals = dests.clone();
    terminals.insert(src);
    Ok(RoutePlan::from_edges(model, src, &edges, &terminals))
}

fn steiner(
    g: &WeightedGraph,
    src: NodeId,
    dests: &BTreeSet<NodeId>,
    candidates: &[NodeId],
) -> Result<(Vec<(NodeId, NodeId)>, f64)> {
    let mut terminals = dests.clone();
    terminals.insert(src);
    let mut set = terminals.clone();
    let (mut best, mut best_w, mut ok) = kruskal(g, &set);
    loop {
        let mut pick: Option<(Vec<(NodeId, NodeId)>, f64, NodeId)> = None;
        for &r in candidates {
            if set.contains(&r) {
                continue;
            }
            let mut s2 = set.clone();
            s2.insert(r);
            let (mut e, _, conn) = kruskal(g, &s2);
            if !conn && ok {
                continue;
            }
            prune(&mut e, &terminals);
            let w = tree_weight(g, &e);
            let improves = if ok { w < best_w - 1e-12 } else { conn };
            let beats_pick = pick.as_ref().is_none_or(|p| w < p.1 - 1e-12);
            if improves && beats_pick {
                pick = Some((e, w, r));
            }
        }
        match pick {
            Some((e, w, r)) => {
                set.insert(r);
                best = e;
                best_w = w;
                ok = true;
            }
            None => break,
        }
    }
    if !ok {
        // disconnected even after a single relay: try growing by several relays
        let mut all = terminals.clone();
        all.extend(candidates.iter().copied());
        let (mut e, _, _) = kruskal(g, &all);
        prune(&mut e, &terminals);
        let covered: BTreeSet<NodeId> = e.iter().flat_map(|&(a, b)| [a, b]).collect();
        if terminals.len() > 1 && !terminals.iter().all(|t| covered.contains(t)) {
            return Err(Error::Routing(format!("nodes {terminals:?} are not connected")));
        }
        if !is_tree_over(&e, &terminals) {
            return Err(Error::Routing(format!("nodes {terminals:?} are not connected")));
        }
        let w = tree_weight(g, &e);
        return Ok((e, w));
    }
    Ok((best, best_w))
}

fn is_tree_over(edges: &[(NodeId, NodeId)], terminals: &BTreeSet<NodeId>) -> bool {
    let Some(&root) = terminals.iter().next() else { return true };
    let reached: BTreeSet<NodeId> = orient(root, edges).into_iter().map(|e| e.1).chain([root]).collect();
    terminals.iter().all(|t| reached.contains(t))
}

/// Multicast across clusters: intra-cluster MST at the source, then one
/// inter-cluster edge per destination cluster into a relay that fans out.
///
/// With `parallel`, channels listed in `busy` are avoided when another inter
/// channel into the same cluster exists.
pub fn inter_cluster_route(
    model: &HardwareModel,
    src: NodeId,
    dests: &BTreeSet<NodeId>,
    busy: &BTreeSet<(NodeId, NodeId)>,
    parallel: bool,
) -> Result<RoutePlan> {
    let g = model.path_graph();
    let home = model.cluster_of(src);
    let mut by_cluster: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
    for &d in dests {
        if d != src {
            by_cluster.entry(model.cluster_of(d)).or_default().insert(d);
        }
    }
    let local = by_cluster.remove(&home).unwrap_or_default();
    let (mut edges, _) = steiner(&g, src, &local, &model.clusters[home])?;
    let mut tree_nodes: BTreeSet<NodeId> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    tree_nodes.insert(src);
    for (k, ds) in by_cluster {
        // (busy, cost, u, r, fan-out edges)
        let mut best: Option<(bool, f64, NodeId, NodeId, Vec<(NodeId, NodeId)>)> = None;
        for &u in &tree_nodes {
            for &r in &model.clusters[k] {
                let Some(c) = model.channel(u, r) else { continue };
                let rest: BTreeSet<NodeId> = ds.iter().copied().filter(|&d| d != r).collect();
                let Ok((fan, fw)) = steiner(&g, r, &rest, &model.clusters[k]) else { continue };
                let cost = -c.fidelity.ln() + fw;
                let is_busy = parallel && busy.contains(&(u.min(r), u.max(r)));
                let better = match &best {
                    None => true,
                    Some(b) => (!is_busy && b.0) || (is_busy == b.0 && cost < b.1 - 1e-12),
                };
                if better {
                    best = Some((is_busy, cost, u, r, fan));
                }
            }
        }
        let (_, _, u, r, fan) = best.ok_or_else(|| {
            Error::Routing(format!("no inter-cluster channel from node {src}'s cluster into cluster {k}"))
        })?;
        edges.push((u, r));
        edges.extend(fan);
    }
    let mut terminals = dests.clone();
    terminals.insert(src);
    Ok(RoutePlan::from_edges(model, src, &edges, &terminals))
}

/// Union of shortest paths from `src` to every destination.
pub fn shortest_route(model: &HardwareModel, src: NodeId, dests: &BTreeSet<NodeId>) -> Result<RoutePlan> {
    let g = model.path_graph();
    let mut set = BTreeSet::new();
    for &d in dests {
        let p = g
            .shortest_path(src, d)
            .ok_or_else(|| Error::Routing(format!("node {d} unreachable from node {src}")))?;
        for w in p.windows(2) {
            set.insert((w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    let edges: Vec<_> = set.into_iter().collect();
    let mut terminals = dests.clone();
    terminals.insert(src);
    Ok(RoutePlan::from_edges(model, src, &edges, &terminals))
}

/// Per-model routing helper with memoised multicast trees and move paths.
#[derive(Debug)]
pub struct Router {
    pub mode: Routing,
    paths: Vec<Vec<Option<Vec<NodeId>>>>,
    cache: Mutex<HashMap<(NodeId, u64), Option<RoutePlan>>>,
}

impl Router {
    pub fn new(model: &HardwareModel, mode: Routing) -> Router {
        let g = model.path_graph();
        let n = model.num_nodes();
        let paths = (0..n).map(|a| (0..n).map(|b| g.shortest_path(a, b)).collect()).collect();
        Router { mode, paths, cache: Mutex::new(HashMap::new()) }
    }

    /// Shortest −ln-fidelity path used by teleportation moves.
    pub fn path(&self, a: NodeId, b: NodeId) -> Option<&[NodeId]> {
        self.paths[a][b].as_deref()
    }

    pub fn hops(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.path(a, b).map(|p| p.len() - 1)
    }

    /// Multicast tree; `busy` only matters in parallel mode.
    pub fn multicast(
        &self,
        model: &HardwareModel,
        src: NodeId,
        dests: &BTreeSet<NodeId>,
        busy: &BTreeSet<(NodeId, NodeId)>,
    ) -> Option<RoutePlan> {
        let cacheable = self.mode != Routing::Parallel || busy.is_empty();
        let key = (src, dests.iter().fold(0u64, |m, &d| m | (1 << d)));
        if cacheable && model.num_nodes() <= 64 {
            if let Some(hit) = self.cache.lock().expect("router cache").get(&key) {
                return hit.clone();
            }
        }
        let same = dests.iter().all(|&d| model.same_cluster(src, d));
        let plan = match self.mode {
            Routing::Shortest => shortest_route(model, src, dests),
            Routing::Mst if same => mst_route(model, src, dests, &model.clusters[model.cluster_of(src)]),
            Routing::Mst => inter_cluster_route(model, src, dests, busy, false),
            Routing::Parallel => inter_cluster_route(model, src, dests, busy, true),
        }
        .ok();
        if cacheable && model.num_nodes() <= 64 {
            self.cache.lock().expect("router cache").insert(key, plan.clone());
        }
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::{NodeSpec, Timing};

    /// A-B 0.98, B-D 0.97, A-C 0.98, C-D 0.98
    fn diamond() -> HardwareModel {
        HardwareModel::new(
            vec![vec![0, 1, 2, 3]],
            vec![NodeSpec { data_qubits: 4, comm_qubits: 1 }; 4],
            vec![(0, 1, 0.98), (1, 3, 0.97), (0, 2, 0.98), (2, 3, 0.98)],
            Timing::default(),
        )
        .unwrap()
    }

    #[test]
    fn multicast_prefers_tree() {
        let m = diamond();
        let d = BTreeSet::from([1, 3]);
        let mst = mst_route(&m, 0, &d, &[0, 1, 2, 3]).unwrap();
        assert_eq!(mst.edges, vec![(0, 1), (1, 3)]);
        assert!((mst.fidelity - 0.98 * 0.97).abs() < 1e-12);
        let sp = shortest_route(&m, 0, &d).unwrap();
        assert_eq!(sp.epr, 3);
    }

    #[test]
    fn single_adjacent_destination() {
        let m = diamond();
        let p = mst_route(&m, 0, &BTreeSet::from([1]), &[0, 1, 2, 3]).unwrap();
        assert_eq!(p.edges, vec![(0, 1)]);
        assert!(p.relays.is_empty());
    }

    #[test]
    fn relay_for_non_adjacent() {
        let m = diamond();
        let p = mst_route(&m, 0, &BTreeSet::from([3]), &[0, 1, 2, 3]).unwrap();
        assert_eq!(p.epr, 2);
        assert_eq!(p.relays.len(), 1);
    }

    #[test]
    fn default_model_relay_rule() {
        let m = HardwareModel::default_model();
        let p = inter_cluster_route(&m, 0, &(1..8).collect(), &BTreeSet::new(), false).unwrap();
        assert_eq!(p.epr, 7);
        assert_eq!(p.cross, 1);
        assert!(p.edges.contains(&(0, 4)));
    }

    #[test]
    fn disconnected_is_error() {
        let m = HardwareModel::new(
            vec![vec![0, 1, 2]],
            vec![NodeSpec { data_qubits: 2, comm_qubits: 1 }; 3],
            vec![(0, 1, 0.98)],
            Timing::default(),
        )
        .unwrap();
        assert!(mst_route(&m, 0, &BTreeSet::from([2]), &[0, 1, 2]).is_err());
    }
}
