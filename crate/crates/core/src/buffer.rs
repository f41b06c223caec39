//! Communication buffer sizing and bookkeeping.
//!
//! A buffer slot is a data qubit reserved to hold an EPR half (a virtual
//! communication qubit) or a lazily teleported program qubit.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ir::{Gate, NodeId, Qubit};

/// Latency of moving an EPR half from the communication qubit into a slot.
pub const T_BUF: f64 = 2.0;

/// What the sizing rule needs to know about one remote block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockProfile {
    pub nodes: BTreeSet<NodeId>,
    /// Serial local execution latency.
    pub t_b: f64,
    /// Dependency level; blocks on the same level can run in parallel.
    pub level: usize,
}

/// `2 * max(max_B floor(t_B / (t_ep + t_buf)), r_pb)`.
pub fn sizing_rule(blocks: impl IntoIterator<Item = (f64, f64)>, r_pb: usize) -> usize {
    let best = blocks
        .into_iter()
        .map(|(t_b, t_ep)| (t_b / (t_ep + T_BUF)).floor() as usize)
        .max()
        .unwrap_or(0);
    2 * best.max(r_pb)
}

/// Widest set of parallel remote blocks touching `node`: blocks sharing a
/// dependency level, or the partner nodes of one collective block.
pub fn parallel_blocks(node: NodeId, blocks: &[BlockProfile]) -> usize {
    let mut per_level: BTreeMap<usize, usize> = BTreeMap::new();
    let mut partners = 0;
    for b in blocks.iter().filter(|b| b.nodes.contains(&node)) {
        *per_level.entry(b.level).or_default() += 1;
        partners = partners.max(b.nodes.len() - 1);
    }
    per_level.values().copied().max().unwrap_or(0).max(partners)
}

/// Initial buffer size of `node`; 0 when no remote block touches it.
pub fn buffer_size_init(node: NodeId, blocks: &[BlockProfile], t_ep: impl Fn(&BlockProfile) -> f64) -> usize {
    let mine: Vec<&BlockProfile> = blocks.iter().filter(|b| b.nodes.contains(&node)).collect();
    if mine.is_empty() {
        return 0;
    }
    sizing_rule(mine.iter().map(|b| (b.t_b, t_ep(b))), parallel_blocks(node, blocks))
}

/// Scale `s` down so that its sum fits `n_idleq`, largest remainder first.
///
/// Nodes flagged in `keep_one` retain at least one slot when the budget
/// allows it; the result is finally clamped to `caps`.
pub fn shrink_proportional(s: &[usize], n_idleq: usize, keep_one: &[bool], caps: &[usize]) -> Vec<usize> {
    let total: usize = s.iter().sum();
    let mut out: Vec<usize> = if total <= n_idleq {
        s.to_vec()
    } else {
        let mut base: Vec<usize> = s.iter().map(|&x| x * n_idleq / total).collect();
        let mut rema: Vec<(usize, usize)> =
            s.iter().enumerate().map(|(i, &x)| ((x * n_idleq) % total, i)).collect();
        // largest remainder first, lower index on ties
        rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut slack = n_idleq - base.iter().sum::<usize>();
        for &(r, i) in &rema {
            if slack == 0 {
                break;
            }
            if r > 0 {
                base[i] += 1;
                slack -= 1;
            }
        }
        let nonidle = keep_one.iter().filter(|&&k| k).count();
        if n_idleq >= nonidle {
            for i in 0..base.len() {
                if keep_one[i] && base[i] == 0 && s[i] > 0 {
                    // take from the largest donor
                    if let Some(j) = (0..base.len()).filter(|&j| base[j] > 1).max_by_key(|&j| (base[j], usize::MAX - j)) {
                        base[j] -= 1;
                        base[i] = 1;
                    }
                }
            }
        }
        base
    };
    for (x, &c) in out.iter_mut().zip(caps) {
        *x = (*x).min(c);
    }
    out
}

/// ±1 on one random node, keeping `sum <= n_idleq` and `s_i <= caps_i`.
pub fn neighbor_buffer(s: &[usize], caps: &[usize], n_idleq: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = s.iter().sum();
    let mut moves = Vec::new();
    for i in 0..s.len() {
        if s[i] < caps[i] && total < n_idleq {
            moves.push((i, true));
        }
        if s[i] > 0 {
            moves.push((i, false));
        }
    }
    let mut out = s.to_vec();
    if moves.is_empty() {
        return out;
    }
    let (i, up) = moves[rng.gen_range(0..moves.len())];
    if up {
        out[i] += 1;
    } else {
        out[i] -= 1;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlotContent {
    /// Half of an EPR pair whose other half sits at `peer`.
    Half { peer: NodeId, peer_slot: usize, born: f64 },
    /// A program qubit left here by a one-way teleport.
    Teleported { qubit: Qubit },
    /// Converted into a regular program slot.
    Program { qubit: Qubit },
}

/// Per-node buffer occupancy. Slot indices below the node's communication
/// qubit count denote physical communication qubits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BufferLedger {
    pub s: Vec<usize>,
    pub comm: Vec<usize>,
    pub slots: Vec<BTreeMap<usize, SlotContent>>,
    pub conversions: Vec<(NodeId, usize)>,
    pub epr_charged: usize,
}

impl BufferLedger {
    pub fn new(s: Vec<usize>, comm: Vec<usize>) -> BufferLedger {
        let n = s.len();
        BufferLedger { s, comm, slots: vec![BTreeMap::new(); n], ..Default::default() }
    }

    /// Buffered (non-communication-qubit) halves currently held at `node`.
    pub fn buffered(&self, node: NodeId) -> usize {
        self.slots[node]
            .iter()
            .filter(|(&k, c)| k >= self.comm[node] && matches!(c, SlotContent::Half { .. }))
            .count()
    }

    /// Record a fresh EPR pair between (a, sa) and (b, sb).
    pub fn create_pair(&mut self, a: NodeId, sa: usize, b: NodeId, sb: usize, t: f64) -> Result<()> {
        for (v, s) in [(a, sa), (b, sb)] {
            if self.slots[v].contains_key(&s) {
                return Err(Error::Protocol(format!("slot ({v}, {s}) already occupied")));
            }
            if s >= self.comm[v] + self.s[v] {
                return Err(Error::Capacity(format!("slot ({v}, {s}) outside the buffer of node {v}")));
            }
        }
        self.epr_charged += 1;
        self.slots[a].insert(sa, SlotContent::Half { peer: b, peer_slot: sb, born: t });
        self.slots[b].insert(sb, SlotContent::Half { peer: a, peer_slot: sa, born: t });
        Ok(())
    }

    /// Consume or discard whatever is in the slot; an EPR partner stays live
    /// until it is released itself.
    pub fn release(&mut self, node: NodeId, slot: usize) -> Result<SlotContent> {
        self.slots[node]
            .remove(&slot)
            .ok_or_else(|| Error::Protocol(format!("slot ({node}, {slot}) is empty")))
    }

    /// Record that a teleport delivered `qubit` into the slot's EPR half.
    pub fn teleport_in(&mut self, node: NodeId, slot: usize, qubit: Qubit) -> Result<()> {
        match self.slots[node].get(&slot) {
            Some(SlotContent::Half { peer, peer_slot, .. }) => {
                let (p, ps) = (*peer, *peer_slot);
                self.slots[p].remove(&ps);
                self.slots[node].insert(slot, SlotContent::Teleported { qubit });
                Ok(())
            }
            _ => Err(Error::Protocol(format!("slot ({node}, {slot}) holds no EPR half"))),
        }
    }

    /// Reclassify a buffered slot as a program slot.
    pub fn convert_virtual_to_program(&mut self, node: NodeId, slot: usize) -> Result<()> {
        let content = self.slots[node]
            .get(&slot)
            .copied()
            .ok_or_else(|| Error::Protocol(format!("slot ({node}, {slot}) is not in the buffer")))?;
        let qubit = match content {
            SlotContent::Teleported { qubit } => qubit,
            SlotContent::Half { peer, peer_slot, .. } => {
                self.slots[peer].remove(&peer_slot);
                Qubit::MAX
            }
            SlotContent::Program { .. } => {
                return Err(Error::Protocol(format!("slot ({node}, {slot}) is already a program slot")))
            }
        };
        self.slots[node].insert(slot, SlotContent::Program { qubit });
        self.conversions.push((node, slot));
        Ok(())
    }

    /// A later teleport of a converted qubit back home costs one pair then.
    pub fn move_back(&mut self, node: NodeId, slot: usize) -> Result<()> {
        match self.slots[node].remove(&slot) {
            Some(SlotContent::Program { .. }) => {
                self.epr_charged += 1;
                Ok(())
            }
            _ => Err(Error::Protocol(format!("slot ({node}, {slot}) holds no converted qubit"))),
        }
    }

    /// Every EPR half has a matching live partner.
    pub fn check(&self) -> Result<()> {
        for (v, m) in self.slots.iter().enumerate() {
            for (&s, c) in m {
                if let SlotContent::Half { peer, peer_slot, .. } = *c {
                    match self.slots[peer].get(&peer_slot) {
                        Some(SlotContent::Half { peer: p2, peer_slot: s2, .. }) if *p2 == v && *s2 == s => {}
                        _ => return Err(Error::Protocol(format!("half at ({v}, {s}) lost its partner"))),
                    }
                }
            }
            if self.buffered(v) > self.s[v] {
                return Err(Error::Capacity(format!("node {v} buffers more halves than its {} slots", self.s[v])));
            }
        }
        Ok(())
    }
}

/// Move an EPR half from a communication qubit into an idle buffer slot.
///
/// `src_slot` must be a communication qubit holding a half and `dst_slot` an
/// idle buffer slot; the returned two CX gates act on the given wires, the
/// second wire being in |0> beforehand.
pub fn expand_buffering(
    ledger: &mut BufferLedger,
    node: NodeId,
    src_slot: usize,
    dst_slot: usize,
    src_wire: u32,
    dst_wire: u32,
) -> Result<Vec<Gate>> {
    if src_slot >= ledger.comm[node] {
        return Err(Error::Protocol(format!("slot {src_slot} of node {node} is not a communication qubit")));
    }
    if dst_slot < ledger.comm[node] || dst_slot >= ledger.comm[node] + ledger.s[node] {
        return Err(Error::Capacity(format!("slot {dst_slot} of node {node} is not a buffer slot")));
    }
    if ledger.slots[node].contains_key(&dst_slot) {
        return Err(Error::Protocol(format!("buffer slot ({node}, {dst_slot}) is occupied")));
    }
    let Some(SlotContent::Half { peer, peer_slot, born }) = ledger.slots[node].get(&src_slot).copied() else {
        return Err(Error::Protocol(format!("communication qubit ({node}, {src_slot}) holds no EPR half")));
    };
    ledger.slots[node].remove(&src_slot);
    ledger.slots[node].insert(dst_slot, SlotContent::Half { peer, peer_slot, born });
    if let Some(SlotContent::Half { peer_slot: ps, .. }) = ledger.slots[peer].get_mut(&peer_slot) {
        *ps = dst_slot;
    }
    Ok(vec![Gate::cx(src_wire, dst_wire), Gate::cx(dst_wire, src_wire)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizing_rule_worked() {
        assert_eq!(sizing_rule([(50.0, 12.0)], 3), 6);
        assert_eq!(sizing_rule([(10.0, 12.0)], 1), 2);
    }

    #[test]
    fn shrink_examples() {
        let k = [true, true];
        let c = [100, 100];
        assert_eq!(shrink_proportional(&[6, 6], 20, &k, &c), vec![6, 6]);
        assert_eq!(shrink_proportional(&[6, 6], 6, &k, &c), vec![3, 3]);
        assert_eq!(shrink_proportional(&[5, 3], 6, &k, &c), vec![4, 2]);
    }

    #[test]
    fn neighbor_at_capacity_only_decrements() {
        for seed in 0..30 {
            let s = neighbor_buffer(&[2, 3], &[2, 3], 10, seed);
            assert!(s.iter().sum::<usize>() == 4);
        }
        assert_eq!(neighbor_buffer(&[1, 1], &[3, 3], 9, 4), neighbor_buffer(&[1, 1], &[3, 3], 9, 4));
    }

    #[test]
    fn ledger_conversion() {
        let mut l = BufferLedger::new(vec![1, 1], vec![1, 1]);
        l.create_pair(0, 0, 1, 0, 0.0).unwrap();
        l.teleport_in(1, 0, 7).unwrap();
        l.convert_virtual_to_program(1, 0).unwrap();
        assert_eq!(l.epr_charged, 1);
        assert!(l.convert_virtual_to_program(0, 1).is_err());
        l.move_back(1, 0).unwrap();
        assert_eq!(l.epr_charged, 2);
        l.check().unwrap();
    }

    #[test]
    fn buffering_needs_half() {
        let mut l = BufferLedger::new(vec![1, 1], vec![1, 1]);
        assert!(expand_buffering(&mut l, 0, 0, 1, 10, 11).is_err());
        l.create_pair(0, 0, 1, 0, 0.0).unwrap();
        let g = expand_buffering(&mut l, 0, 0, 1, 10, 11).unwrap();
        assert_eq!(g.len(), 2);
        assert!(l.buffered(0) == 1);
        l.check().unwrap();
        // destination now occupied
        l.create_pair(0, 0, 1, 1, 1.0).unwrap();
        assert!(expand_buffering(&mut l, 0, 0, 1, 10, 12).is_err());
    }
}
