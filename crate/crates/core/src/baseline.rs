//! Burst aggregation of remote two-qubit gates.

use std::collections::BTreeSet;

use crate::ir::{commutes, Circuit, Gate, NodeId, Qubit, Role};
use crate::partition::Mapping;
use crate::program::{Block, Program, Seg};

/// How far ahead a burst looks for more gates.
pub const WINDOW: usize = 256;

/// Group remote two-qubit gates between the same node pair that share a
/// qubit (the anchor) into one block each.
///
/// A later gate joins if it commutes with every gate it would jump over.
/// Local gates on either node join when they leave every anchor alone or
/// act on it only diagonally. Everything else stays a local segment or a single-gate block.
pub fn burst(gates: &[Gate], loc: &dyn Fn(Qubit) -> NodeId) -> Vec<Seg> {
    let n = gates.len();
    let mut taken = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        let g = &gates[i];
        let nodes: BTreeSet<NodeId> = g.qubits.iter().map(|&q| loc(q)).collect();
        if nodes.len() <= 1 {
            out.push(Seg::Local(g.clone()));
            continue;
        }
        if g.qubits.len() != 2 {
            out.push(Seg::Block(Block::new(vec![g.clone()])));
            continue;
        }
        let mut anchors: Vec<Qubit> = g.qubits.to_vec();
        let mut members = vec![g.clone()];
        let mut block_q: BTreeSet<Qubit> = g.qubits.iter().copied().collect();
        let mut skipped: Vec<usize> = Vec::new();
        for j in i + 1..n.min(i + 1 + WINDOW) {
            if taken[j] {
                continue;
            }
            let h = &gates[j];
            let touches = h.qubits.iter().any(|q| block_q.contains(q));
            let mut joined = false;
            let local = h.qubits.iter().all(|&q| loc(q) == loc(h.qubits[0]));
            if (touches || local) && skipped.iter().all(|&k| commutes(&gates[k], h)) {
                let hn: BTreeSet<NodeId> = h.qubits.iter().map(|&q| loc(q)).collect();
                let next: Vec<Qubit> = if hn == nodes && h.qubits.len() == 2 {
                    anchors.iter().copied().filter(|&a| h.touches(a)).collect()
                } else if hn.len() == 1 && nodes.is_superset(&hn) {
                    let v = *hn.iter().next().expect("one node");
                    anchors
                        .iter()
                        .copied()
                        .filter(|&a| {
                            loc(a) != v || h.role_of(a).is_none_or(|r| r == Role::Diag)
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                if !next.is_empty() {
                    anchors = next;
                    members.push(h.clone());
                    block_q.extend(h.qubits.iter().copied());
                    taken[j] = true;
                    joined = true;
                }
            }
            if !joined {
                skipped.push(j);
                // every anchor line is interrupted: nothing more can join cheaply
                if anchors.iter().all(|&a| skipped.iter().any(|&k| gates[k].touches(a))) {
                    break;
                }
            }
        }
        out.push(Seg::Block(Block::new(members)));
    }
    out
}

/// Burst-aggregate a circuit under an initial mapping.
pub fn burst_aggregate(circ: &Circuit, m: &Mapping) -> Program {
    let loc = |q: Qubit| m.node_of[q as usize];
    Program {
        n_prog: circ.num_qubits,
        num_clbits: circ.num_clbits,
        home: m.node_of.clone(),
        segs: burst(&circ.gates, &loc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(segs: &[Seg]) -> Vec<usize> {
        segs.iter()
            .filter_map(|s| match s {
                Seg::Block(b) => Some(b.gates.len()),
                Seg::Local(_) => None,
            })
            .collect()
    }

    #[test]
    fn same_control_burst() {
        let loc = |q: Qubit| if q == 0 { 0 } else { 1 };
        let g: Vec<Gate> = (1..6).map(|t| Gate::cx(0, t)).collect();
        assert_eq!(blocks(&burst(&g, &loc)), vec![5]);
    }

    #[test]
    fn no_remote_no_blocks() {
        let loc = |_: Qubit| 0;
        let g = vec![Gate::cx(0, 1), Gate::h(0)];
        assert!(blocks(&burst(&g, &loc)).is_empty());
    }

    #[test]
    fn general_gate_ends_burst_on_its_anchor() {
        // h(0) rides along on the moved side, which leaves q1 as the only
        // anchor; cx(0,2) does not touch it
        let loc = |q: Qubit| if q == 0 { 0 } else { 1 };
        let g = vec![Gate::cx(0, 1), Gate::h(0), Gate::cx(0, 2)];
        assert_eq!(blocks(&burst(&g, &loc)), vec![2, 1]);
    }

    #[test]
    fn hoists_over_commuting_gate() {
        // cx(0,3) goes to node 2 and commutes with the later control use of 0
        let loc = |q: Qubit| [0, 1, 1, 2][q as usize];
        let g = vec![Gate::cx(0, 1), Gate::cx(0, 3), Gate::cx(0, 2)];
        let segs = burst(&g, &loc);
        assert_eq!(blocks(&segs), vec![2, 1]);
    }
}
