//! Initial placement of program qubits onto nodes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hw::HardwareModel;
use crate::ir::{Circuit, NodeId};

/// Program qubit placement plus the per-node communication buffer sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mapping {
    pub node_of: Vec<NodeId>,
    pub slot_of: Vec<usize>,
    /// Reserved buffer slots per node.
    pub s: Vec<usize>,
}

impl Mapping {
    /// Build from a node assignment; slots are handed out in qubit order.
    pub fn from_nodes(node_of: Vec<NodeId>, num_nodes: usize) -> Mapping {
        let mut next = vec![0; num_nodes];
        let slot_of = node_of
            .iter()
            .map(|&v| {
                next[v] += 1;
                next[v] - 1
            })
            .collect();
        Mapping { node_of, slot_of, s: vec![0; num_nodes] }
    }

    pub fn num_qubits(&self) -> usize {
        self.node_of.len()
    }

    pub fn program_count(&self, v: NodeId) -> usize {
        self.node_of.iter().filter(|&&x| x == v).count()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.s.len()];
        for &v in &self.node_of {
            c[v] += 1;
        }
        c
    }

    pub fn is_idle(&self, v: NodeId) -> bool {
        !self.node_of.contains(&v)
    }

    /// Idle data qubits summed over non-idle nodes.
    pub fn n_idleq(&self, model: &HardwareModel) -> usize {
        self.counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(v, &c)| model.nodes[v].data_qubits.saturating_sub(c))
            .sum()
    }

    pub fn validate(&self, model: &HardwareModel) -> Result<()> {
        if self.s.len() != model.num_nodes() || self.slot_of.len() != self.node_of.len() {
            return Err(Error::Invalid("mapping does not match the hardware model".into()));
        }
        let counts = self.counts();
        for (v, &c) in counts.iter().enumerate() {
            let d = model.nodes[v].data_qubits;
            if c + self.s[v] > d {
                return Err(Error::Capacity(format!(
                    "node {v}: {c} program qubits + {} buffer slots exceed {d} data qubits",
                    self.s[v]
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (q, (&v, &slot)) in self.node_of.iter().zip(&self.slot_of).enumerate() {
            if slot >= model.nodes[v].data_qubits || !seen.insert((v, slot)) {
                return Err(Error::Invalid(format!("qubit {q}: slot ({v}, {slot}) invalid or taken")));
            }
        }
        Ok(())
    }

    fn reslot(&mut self) {
        let n = self.s.len();
        let fresh = Mapping::from_nodes(self.node_of.clone(), n);
        self.slot_of = fresh.slot_of;
    }
}

/// Dense symmetric interaction weights between logical qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    pub n: usize,
    w: Vec<u32>,
}

impl InteractionGraph {
    pub fn new(n: usize) -> InteractionGraph {
        InteractionGraph { n, w: vec![0; n * n] }
    }

    pub fn weight(&self, a: usize, b: usize) -> u32 {
        self.w[a * self.n + b]
    }

    pub fn add(&mut self, a: usize, b: usize, x: u32) {
        self.w[a * self.n + b] += x;
        self.w[b * self.n + a] += x;
    }

    /// Total weight of edges whose endpoints sit on different nodes.
    pub fn cut(&self, node_of: &[NodeId]) -> u64 {
        let mut c = 0u64;
        for a in 0..self.n {
            for b in a + 1..self.n {
                if node_of[a] != node_of[b] {
                    c += self.weight(a, b) as u64;
                }
            }
        }
        c
    }
}

/// Edge weight = number of multi-qubit gates touching both endpoints.
pub fn interaction_graph(circ: &Circuit) -> InteractionGraph {
    let mut g = InteractionGraph::new(circ.num_qubits as usize);
    for gate in circ.gates.iter().filter(|g| g.is_multi()) {
        let q = &gate.qubits;
        for i in 0..q.len() {
            for j in i + 1..q.len() {
                g.add(q[i] as usize, q[j] as usize, 1);
            }
        }
    }
    g
}

fn capacities(model: &HardwareModel, reserve: usize) -> Vec<usize> {
    model.nodes.iter().map(|s| s.data_qubits.saturating_sub(reserve)).collect()
}

/// Fill nodes in id order, `data_qubits - reserve` program qubits each.
pub fn contiguous(n: usize, model: &HardwareModel, reserve: usize) -> Result<Vec<NodeId>> {
    let cap = capacities(model, reserve);
    let total: usize = cap.iter().sum();
    if n > total {
        return Err(Error::Capacity(format!(
            "{n} program qubits exceed the {total} usable data qubits"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for (v, &c) in cap.iter().enumerate() {
        for _ in 0..c {
            if out.len() == n {
                return Ok(out);
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Exchange-based refinement of the contiguous placement.
///
/// Each step applies the single swap or move-to-free-slot with the largest
/// cut reduction, lowest qubit pair first on ties, until none improves.
pub fn oee_partition(g: &InteractionGraph, model: &HardwareModel, reserve: usize) -> Result<Mapping> {
    let nn = model.num_nodes();
    let cap = capacities(model, reserve);
    let mut node_of = contiguous(g.n, model, reserve)?;
    let mut count = vec![0usize; nn];
    for &v in &node_of {
        count[v] += 1;
    }
    // ext[q * nn + v] = weight from q to qubits on node v
    let mut ext = vec![0i64; g.n * nn];
    for a in 0..g.n {
        for b in 0..g.n {
            ext[a * nn + node_of[b]] += g.weight(a, b) as i64;
        }
    }
    loop {
        // (gain, q, r or usize::MAX + node)
        let mut best: Option<(i64, usize, usize, NodeId)> = None;
        let better = |cand: (i64, usize, usize, NodeId), best: &Option<(i64, usize, usize, NodeId)>| {
            cand.0 > 0 && best.is_none_or(|b| cand.0 > b.0)
        };
        for q in 0..g.n {
            let a = node_of[q];
            for r in q + 1..g.n {
                let b = node_of[r];
                if a == b {
                    continue;
                }
                let gain = ext[q * nn + b] - ext[q * nn + a] + ext[r * nn + a] - ext[r * nn + b]
                    - 2 * g.weight(q, r) as i64;
                let cand = (gain, q, r, b);
                if better(cand, &best) {
                    best = Some(cand);
                }
            }
            for v in 0..nn {
                if v != a && count[v] < cap[v] {
                    let gain = ext[q * nn + v] - ext[q * nn + a];
                    let cand = (gain, q, usize::MAX, v);
                    if better(cand, &best) {
                        best = Some(cand);
                    }
                }
            }
        }
        let Some((_, q, r, v)) = best else { break };
        let mut shift = |x: usize, to: NodeId, node_of: &mut Vec<NodeId>| {
            let from = node_of[x];
            for y in 0..g.n {
                let w = g.weight(x, y) as i64;
                if w != 0 {
                    ext[y * nn + from] -= w;
                    ext[y * nn + to] += w;
                }
            }
            count[from] -= 1;
            count[to] += 1;
            node_of[x] = to;
        };
        if r == usize::MAX {
            shift(q, v, &mut node_of);
        } else {
            let a = node_of[q];
            shift(q, v, &mut node_of);
            shift(r, a, &mut node_of);
        }
    }
    Ok(Mapping::from_nodes(node_of, nn))
}

/// One random legal perturbation: a cross-node swap or a move into free space.
pub fn neighbor_mapping(m: &Mapping, model: &HardwareModel, reserve: usize, seed: u64) -> Mapping {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.num_qubits();
    let nn = model.num_nodes();
    if n == 0 {
        return m.clone();
    }
    let counts = m.counts();
    let room = |v: NodeId| {
        counts[v] + 1 + reserve.max(m.s[v]) <= model.nodes[v].data_qubits
    };
    let mut out = m.clone();
    for _ in 0..64 {
        let q = rng.gen_range(0..n);
        let a = m.node_of[q];
        if rng.gen_bool(0.5) {
            let others: Vec<usize> = (0..n).filter(|&r| m.node_of[r] != a).collect();
            if let Some(&r) = others.choose(&mut rng) {
                out.node_of.swap(q, r);
                out.reslot();
                return out;
            }
        } else {
            let targets: Vec<NodeId> = (0..nn).filter(|&v| v != a && room(v)).collect();
            if let Some(&v) = targets.choose(&mut rng) {
                out.node_of[q] = v;
                out.reslot();
                return out;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Gate;

    fn two_nodes(data: usize) -> HardwareModel {
        HardwareModel::single_cluster(2, data, 1)
    }

    #[test]
    fn graph_weights() {
        let mut c = Circuit::new(3);
        c.push(Gate::cx(0, 1));
        c.push(Gate::cx(0, 1));
        c.push(Gate::mcx(&[0, 1], 2));
        let g = interaction_graph(&c);
        assert_eq!(g.weight(0, 1), 3);
        assert_eq!(g.weight(1, 2), 1);
        assert_eq!(g.weight(0, 2), 1);
    }

    #[test]
    fn cliques_separate() {
        let mut g = InteractionGraph::new(4);
        g.add(0, 2, 5);
        g.add(1, 3, 5);
        let m = oee_partition(&g, &two_nodes(2), 0).unwrap();
        assert_eq!(g.cut(&m.node_of), 0);
        assert_eq!(m.node_of[0], m.node_of[2]);
    }

    #[test]
    fn capacity_error() {
        let g = InteractionGraph::new(10);
        assert!(matches!(oee_partition(&g, &two_nodes(5), 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn packed_nodes_only_swap() {
        let m = Mapping::from_nodes(vec![0, 0, 1, 1], 2);
        let model = two_nodes(2);
        for seed in 0..20 {
            let n = neighbor_mapping(&m, &model, 0, seed);
            assert_eq!(n.counts(), vec![2, 2]);
            n.validate(&model).unwrap();
        }
    }

    #[test]
    fn neighbor_is_seeded() {
        let m = Mapping::from_nodes(vec![0, 0, 1], 2);
        let model = two_nodes(4);
        assert_eq!(neighbor_mapping(&m, &model, 1, 9), neighbor_mapping(&m, &model, 1, 9));
    }
}
