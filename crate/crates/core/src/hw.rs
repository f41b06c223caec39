//! Hierarchical hardware description: clusters of nodes joined by EPR channels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::NodeId;

/// Operation latencies (in CX units) and fidelities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub t_1q: f64,
    pub t_2q: f64,
    pub t_ms: f64,
    pub t_iep: f64,
    pub t_icb: f64,
    pub t_oep: f64,
    pub t_ocb: f64,
    pub f_1q: f64,
    pub f_2q: f64,
    pub f_ms: f64,
    pub f_iep: f64,
    pub f_oep: f64,
    /// Decoherence coefficient of the cost model.
    pub t_decoherence: f64,
}

impl Default for Timing {
    fn default() -> Timing {
        Timing {
            t_1q: 0.1,
            t_2q: 1.0,
            t_ms: 5.0,
            t_iep: 12.0,
            t_icb: 1.0,
            t_oep: 1000.0,
            t_ocb: 100.0,
            f_1q: 0.9999,
            f_2q: 0.9980,
            f_ms: 0.9960,
            f_iep: 0.98,
            f_oep: 0.90,
            t_decoherence: 100_000.0,
        }
    }
}

impl Timing {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("t_1q", self.t_1q),
            ("t_2q", self.t_2q),
            ("t_ms", self.t_ms),
            ("t_iep", self.t_iep),
            ("t_icb", self.t_icb),
            ("t_oep", self.t_oep),
            ("t_ocb", self.t_ocb),
            ("t_decoherence", self.t_decoherence),
        ];
        for (name, v) in durations {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("timing.{name} must be positive, got {v}")));
            }
        }
        if self.t_oep < self.t_iep {
            return Err(Error::Config("timing.t_oep must be >= timing.t_iep".into()));
        }
        for (name, f) in [
            ("f_1q", self.f_1q),
            ("f_2q", self.f_2q),
            ("f_ms", self.f_ms),
            ("f_iep", self.f_iep),
            ("f_oep", self.f_oep),
        ] {
            check_fidelity(&format!("timing.{name}"), f)?;
        }
        Ok(())
    }
}

fn check_fidelity(loc: &str, f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{loc}: fidelity {f} outside (0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub data_qubits: usize,
    pub comm_qubits: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelKind {
    Intra,
    Inter,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub a: NodeId,
    pub b: NodeId,
    pub fidelity: f64,
    pub kind: ChannelKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardwareModel {
    pub clusters: Vec<Vec<NodeId>>,
    pub nodes: Vec<NodeSpec>,
    pub channels: Vec<Channel>,
    pub timing: Timing,
    cluster_of: Vec<usize>,
    adj: Vec<Vec<(NodeId, f64)>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    clusters: Vec<Vec<NodeId>>,
    nodes: NodeSpec,
    #[serde(default, rename = "node", skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<RawOverride>,
    #[serde(default)]
    channels: Vec<RawChannel>,
    #[serde(default)]
    timing: Timing,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    id: NodeId,
    #[serde(skip_serializing_if = "Option::is_none")]
    data_qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comm_qubits: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    a: NodeId,
    b: NodeId,
    fidelity: f64,
}

impl HardwareModel {
    /// Build and validate a model. Channels are normalised to `a < b` and sorted.
    pub fn new(
        clusters: Vec<Vec<NodeId>>,
        nodes: Vec<NodeSpec>,
        channels: Vec<(NodeId, NodeId, f64)>,
        timing: Timing,
    ) -> Result<HardwareModel> {
        timing.validate()?;
        let n = nodes.len();
        let mut cluster_of = vec![usize::MAX; n];
        for (ci, c) in clusters.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Config(format!("clusters[{ci}] is empty")));
            }
            for &v in c {
                if v >= n {
                    return Err(Error::Config(format!("clusters[{ci}]: unknown node {v}")));
                }
                if cluster_of[v] != usize::MAX {
                    return Err(Error::Config(format!("node {v} listed in two clusters")));
                }
                cluster_of[v] = ci;
            }
        }
        if let Some(v) = cluster_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::Config(format!("node {v} belongs to no cluster")));
        }
        let mut chans: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for (i, &(a, b, f)) in channels.iter().enumerate() {
            let loc = format!("channels[{i}]");
            if a >= n || b >= n {
                return Err(Error::Config(format!("{loc}: unknown node {}", a.max(b))));
            }
            if a == b {
                return Err(Error::Config(format!("{loc}: self loop on node {a}")));
            }
            check_fidelity(&loc, f)?;
            if chans.insert((a.min(b), a.max(b)), f).is_some() {
                return Err(Error::Config(format!("{loc}: duplicate channel {a}-{b}")));
            }
        }
        let mut adj = vec![Vec::new(); n];
        let mut out = Vec::with_capacity(chans.len());
        for ((a, b), f) in chans {
            for v in [a, b] {
                if nodes[v].comm_qubits == 0 {
                    return Err(Error::Config(format!(
                        "node {v} has a channel but no communication qubit"
                    )));
                }
            }
            let kind =
                if cluster_of[a] == cluster_of[b] { ChannelKind::Intra } else { ChannelKind::Inter };
            adj[a].push((b, f));
            adj[b].push((a, f));
            out.push(Channel { a, b, fidelity: f, kind });
        }
        Ok(HardwareModel { clusters, nodes, channels: out, timing, cluster_of, adj })
    }

    /// Two clusters of four nodes, 40 data qubits and one communication qubit
    /// per node. Every intra-cluster pair is linked at `f_iep` and every
    /// cross-cluster pair at `f_oep`.
    pub fn default_model() -> HardwareModel {
        let timing = Timing::default();
        let clusters = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]];
        let mut ch = Vec::new();
        for a in 0..8 {
            for b in a + 1..8 {
                let f = if a / 4 == b / 4 { timing.f_iep } else { timing.f_oep };
                ch.push((a, b, f));
            }
        }
        HardwareModel::new(clusters, vec![NodeSpec { data_qubits: 40, comm_qubits: 1 }; 8], ch, timing)
            .expect("default model is valid")
    }

    /// Single cluster, fully connected, uniform nodes.
    pub fn single_cluster(nodes: usize, data_qubits: usize, comm_qubits: usize) -> HardwareModel {
        let timing = Timing::default();
        let mut ch = Vec::new();
        for a in 0..nodes {
            for b in a + 1..nodes {
                ch.push((a, b, timing.f_iep));
            }
        }
        HardwareModel::new(
            vec![(0..nodes).collect()],
            vec![NodeSpec { data_qubits, comm_qubits }; nodes],
            ch,
            timing,
        )
        .expect("uniform cluster is valid")
    }

    pub fn load(text: &str) -> Result<HardwareModel> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let n = raw.clusters.iter().flatten().copied().max().map_or(0, |m| m + 1);
        let mut nodes = vec![raw.nodes; n];
        for (i, o) in raw.overrides.iter().enumerate() {
            let spec = nodes
                .get_mut(o.id)
                .ok_or_else(|| Error::Config(format!("node[{i}]: unknown node {}", o.id)))?;
            if let Some(d) = o.data_qubits {
                spec.data_qubits = d;
            }
            if let Some(c) = o.comm_qubits {
                spec.comm_qubits = c;
            }
        }
        let channels = raw.channels.iter().map(|c| (c.a, c.b, c.fidelity)).collect();
        HardwareModel::new(raw.clusters, nodes, channels, raw.timing)
    }

    pub fn save(&self) -> String {
        let base = self.nodes.first().copied().unwrap_or(NodeSpec { data_qubits: 0, comm_qubits: 0 });
        let overrides = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != base)
            .map(|(id, s)| RawOverride {
                id,
                data_qubits: (s.data_qubits != base.data_qubits).then_some(s.data_qubits),
                comm_qubits: (s.comm_qubits != base.comm_qubits).then_some(s.comm_qubits),
            })
            .collect();
        let raw = RawConfig {
            clusters: self.clusters.clone(),
            nodes: base,
            overrides,
            channels: self
                .channels
                .iter()
                .map(|c| RawChannel { a: c.a, b: c.b, fidelity: c.fidelity })
                .collect(),
            timing: self.timing.clone(),
        };
        toml::to_string(&raw).expect("model serialises")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn cluster_of(&self, v: NodeId) -> usize {
        self.cluster_of[v]
    }

    pub fn same_cluster(&self, a: NodeId, b: NodeId) -> bool {
        self.cluster_of[a] == self.cluster_of[b]
    }

    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, f64)] {
        &self.adj[v]
    }

    pub fn channel(&self, a: NodeId, b: NodeId) -> Option<&Channel> {
        let (a, b) = (a.min(b), a.max(b));
        self.channels.iter().find(|c| c.a == a && c.b == b)
    }

    pub fn total_data_qubits(&self) -> usize {
        self.nodes.iter().map(|s| s.data_qubits).sum()
    }

    /// EPR preparation latency between two nodes.
    pub fn t_ep(&self, a: NodeId, b: NodeId) -> f64 {
        if self.same_cluster(a, b) {
            self.timing.t_iep
        } else {
            self.timing.t_oep
        }
    }

    /// Classical message latency between two nodes.
    pub fn t_cb(&self, a: NodeId, b: NodeId) -> f64 {
        if a == b {
            0.0
        } else if self.same_cluster(a, b) {
            self.timing.t_icb
        } else {
            self.timing.t_ocb
        }
    }

    /// Channel graph weighted by `-ln(fidelity)`.
    pub fn path_graph(&self) -> WeightedGraph {
        let mut g = WeightedGraph::new(self.num_nodes());
        for c in &self.channels {
            g.add_edge(c.a, c.b, -c.fidelity.ln());
        }
        g
    }
}

/// Undirected graph with non-negative edge weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> WeightedGraph {
        WeightedGraph { n, edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        self.edges.push((a.min(b), a.max(b), w));
        self.adj[a].push((b, w));
        self.adj[b].push((a, w));
    }

    /// Weight of the edge between `a` and `b`, infinite when absent.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.adj[a].iter().find(|(v, _)| *v == b).map_or(f64::INFINITY, |e| e.1)
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    /// Dijkstra from `src`; returns (distance, predecessor) per vertex.
    pub fn shortest_from(&self, src: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        let mut dist = vec![f64::INFINITY; self.n];
        let mut prev = vec![None; self.n];
        let mut done = vec![false; self.n];
        dist[src] = 0.0;
        for _ in 0..self.n {
            let mut u = None;
            for v in 0..self.n {
                if !done[v] && dist[v].is_finite() && u.is_none_or(|x: usize| dist[v] < dist[x]) {
                    u = Some(v);
                }
            }
            let Some(u) = u else { break };
            done[u] = true;
            for &(v, w) in &self.adj[u] {
                let d = dist[u] + w;
                // strict improvement keeps the lowest-id predecessor on ties
                if d < dist[v] - 1e-12 {
                    dist[v] = d;
                    prev[v] = Some(u);
                }
            }
        }
        (dist, prev)
    }

    /// Vertex sequence of a minimum-weight path, `None` if unreachable.
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let (dist, prev) = self.shortest_from(a);
        if !dist[b].is_finite() {
            return None;
        }
        let mut path = vec![b];
        let mut v = b;
        while let Some(p) = prev[v] {
            path.push(p);
            v = p;
        }
        path.reverse();
        Some(path)
    }
}
