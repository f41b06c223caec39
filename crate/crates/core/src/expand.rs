//! Protocol expansion: turn a planned program into physical operations on
//! wires (data slots, communication qubits and buffered EPR halves).

use std::collections::{BTreeSet, HashMap, VecDeque};

use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};
use crate::hw::HardwareModel;
use crate::ir::{Gate, GateKind, NodeId, Pauli, Qubit};
use crate::lower::lower_mcx;
use crate::program::{Block, Program, Seg};
use crate::verify::SimOp;

/// First wire id handed out for EPR halves and scratch qubits.
pub const WIRE_BASE: u32 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Res {
    /// A communication qubit.
    Comm(NodeId, usize),
    /// A data slot.
    Slot(NodeId, usize),
    /// The EPR generator of a node.
    Gen(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Gate(Gate),
    /// Creates both wires; `buffered` halves sit in data slots.
    Epr { a: NodeId, b: NodeId, inter: bool, buffered: u8 },
    /// Swap a state out of a communication qubit into a fresh data slot.
    Relocate,
    /// Drop a measured wire.
    Release,
    Alloc,
    FreeClean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Op {
    pub kind: OpKind,
    pub node: NodeId,
    pub wires: SmallVec<[u32; 3]>,
    pub res: SmallVec<[Res; 2]>,
    /// Ordering constraints beyond shared wires and classical bits.
    pub deps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expanded {
    pub ops: Vec<Op>,
    pub n_prog: u32,
    /// Final wire of each program qubit.
    pub outputs: Vec<u32>,
    pub num_clbits: u32,
    /// Most data slots holding EPR halves at once, per node.
    pub peak_buffer: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Place {
    Comm(usize),
    Slot(usize),
}

#[derive(Clone, Copy, Debug)]
struct Live {
    node: NodeId,
    place: Place,
    program: bool,
}

struct Expander<'a> {
    model: &'a HardwareModel,
    s: &'a [usize],
    ops: Vec<Op>,
    next_wire: u32,
    next_bit: u32,
    qw: Vec<u32>,
    qn: Vec<NodeId>,
    live: HashMap<u32, Live>,
    /// Free data slots per node, least recently released first.
    free_slots: Vec<VecDeque<usize>>,
    comm_used: Vec<BTreeSet<usize>>,
    buffered_now: Vec<usize>,
    peak_buffer: Vec<usize>,
    last_release: HashMap<Res, usize>,
}

impl<'a> Expander<'a> {
    fn push(&mut self, kind: OpKind, node: NodeId, wires: &[u32]) -> usize {
        self.ops.push(Op { kind, node, wires: wires.into(), res: SmallVec::new(), deps: Vec::new() });
        self.ops.len() - 1
    }

    fn gate(&mut self, g: Gate, v: NodeId) -> usize {
        let w = g.qubits.clone();
        self.push(OpKind::Gate(g), v, &w)
    }

    fn wire(&mut self) -> u32 {
        self.next_wire += 1;
        self.next_wire - 1
    }

    fn bit(&mut self) -> u32 {
        self.next_bit += 1;
        self.next_bit - 1
    }

    fn free_data(&self, v: NodeId) -> usize {
        self.free_slots[v].len()
    }

    fn res_of(v: NodeId, p: Place) -> Res {
        match p {
            Place::Comm(i) => Res::Comm(v, i),
            Place::Slot(i) => Res::Slot(v, i),
        }
    }

    /// Put `w` somewhere at `v`; returns the op that last freed that place.
    fn occupy(&mut self, w: u32, v: NodeId, comm: Option<usize>, program: bool) -> Option<usize> {
        let place = match comm {
            Some(i) => {
                self.comm_used[v].insert(i);
                Place::Comm(i)
            }
            None => {
                let i = self.free_slots[v].pop_front().expect("caller checked for a free slot");
                if !program {
                    self.buffered_now[v] += 1;
                    self.peak_buffer[v] = self.peak_buffer[v].max(self.buffered_now[v]);
                }
                Place::Slot(i)
            }
        };
        self.live.insert(w, Live { node: v, place, program });
        self.last_release.get(&Self::res_of(v, place)).copied()
    }

    fn occupy_op(&mut self, op: usize, w: u32, v: NodeId, comm: Option<usize>, program: bool) {
        if let Some(d) = self.occupy(w, v, comm, program) {
            self.ops[op].deps.push(d);
        }
    }

    fn vacate(&mut self, w: u32, op: usize) {
        let l = self.live.remove(&w).expect("vacating a live wire");
        self.last_release.insert(Self::res_of(l.node, l.place), op);
        match l.place {
            Place::Comm(i) => {
                self.comm_used[l.node].remove(&i);
            }
            Place::Slot(i) => {
                self.free_slots[l.node].push_back(i);
                if !l.program {
                    self.buffered_now[l.node] -= 1;
                }
            }
        }
    }

    /// A wire now holds program state; buffered halves become program slots.
    fn adopt(&mut self, w: u32) {
        if let Some(l) = self.live.get_mut(&w) {
            if matches!(l.place, Place::Slot(_)) && !l.program {
                l.program = true;
                self.buffered_now[l.node] -= 1;
            }
        }
    }

    fn release(&mut self, w: u32, v: NodeId) {
        let op = self.push(OpKind::Release, v, &[w]);
        self.vacate(w, op);
    }

    /// A free communication qubit first, since a half parked in a buffer slot
    /// costs a swap; buffer slots take the overflow.
    fn holder(&mut self, v: NodeId) -> Result<Option<usize>> {
        let c = self.model.nodes[v].comm_qubits;
        if let Some(i) = (0..c).find(|i| !self.comm_used[v].contains(i)) {
            return Ok(Some(i));
        }
        if self.buffered_now[v] < self.s.get(v).copied().unwrap_or(0) && self.free_data(v) > 0 {
            return Ok(None);
        }
        Err(Error::Capacity(format!("node {v} has no room for another EPR half")))
    }

    fn epr(&mut self, a: NodeId, b: NodeId) -> Result<(u32, u32)> {
        let ca = self.holder(a)?;
        let (wa, wb) = (self.wire(), self.wire());
        let inter = !self.model.same_cluster(a, b);
        let idx = self.push(OpKind::Epr { a, b, inter, buffered: 0 }, a, &[wa, wb]);
        self.occupy_op(idx, wa, a, ca, false);
        let cb = self.holder(b)?;
        self.occupy_op(idx, wb, b, cb, false);
        let buffered = ca.is_none() as u8 + cb.is_none() as u8;
        self.ops[idx].kind = OpKind::Epr { a, b, inter, buffered };
        self.ops[idx].res = smallvec![Res::Gen(a), Res::Gen(b)];
        Ok((wa, wb))
    }

    fn teleport(&mut self, q: Qubit, a: NodeId, b: NodeId) -> Result<()> {
        let w = self.qw[q as usize];
        let (ea, eb) = self.epr(a, b)?;
        let (m1, m2) = (self.bit(), self.bit());
        self.gate(Gate::cx(w, ea), a);
        self.gate(Gate::h(w), a);
        self.gate(Gate::measure(w, m1), a);
        self.gate(Gate::measure(ea, m2), a);
        self.release(w, a);
        self.release(ea, a);
        self.gate(Gate::cond(Pauli::X, m2, eb), b);
        self.gate(Gate::cond(Pauli::Z, m1, eb), b);
        self.qw[q as usize] = eb;
        self.qn[q as usize] = b;
        Ok(())
    }

    /// Move a qubit out of a communication qubit into a data slot.
    fn settle(&mut self, q: Qubit) -> Result<()> {
        let w = self.qw[q as usize];
        let l = self.live[&w];
        if matches!(l.place, Place::Slot(_)) {
            self.adopt(w);
            return Ok(());
        }
        if self.free_data(l.node) == 0 {
            return Err(Error::Capacity(format!("node {} has no data slot to settle qubit {q}", l.node)));
        }
        let d = self.wire();
        let op = self.push(OpKind::Relocate, l.node, &[w, d]);
        self.vacate(w, op);
        self.occupy_op(op, d, l.node, None, true);
        self.qw[q as usize] = d;
        Ok(())
    }

    fn run_gate(&mut self, g: &Gate, v: NodeId) -> Result<()> {
        let GateKind::Mcx { controls } = g.kind else {
            self.gate(g.clone(), v);
            return Ok(());
        };
        let k = controls as usize;
        let want = k.saturating_sub(2);
        let mut helpers: Vec<u32> = Vec::new();
        let mut scratch: Vec<u32> = Vec::new();
        if k >= 4 {
            let mut others: Vec<u32> = self
                .live
                .iter()
                .filter(|(w, l)| l.node == v && l.program && !g.qubits.contains(w))
                .map(|(&w, _)| w)
                .collect();
            others.sort_unstable();
            helpers.extend(others.into_iter().take(want));
            while helpers.len() < want && self.free_data(v) > 0 {
                let w = self.wire();
                let op = self.push(OpKind::Alloc, v, &[w]);
                self.occupy_op(op, w, v, None, true);
                helpers.push(w);
                scratch.push(w);
            }
            if helpers.is_empty() {
                let c = self.model.nodes[v].comm_qubits;
                if let Some(i) = (0..c).find(|i| !self.comm_used[v].contains(i)) {
                    let w = self.wire();
                    let op = self.push(OpKind::Alloc, v, &[w]);
                    self.occupy_op(op, w, v, Some(i), true);
                    helpers.push(w);
                    scratch.push(w);
                }
            }
        }
        for x in lower_mcx(g.controls(), g.target().expect("mcx target"), &helpers)? {
            self.gate(x, v);
        }
        for w in scratch {
            let op = self.push(OpKind::FreeClean, v, &[w]);
            self.vacate(w, op);
        }
        Ok(())
    }

    fn block(&mut self, b: &Block) -> Result<()> {
        let plan = &b.plan;
        for m in &plan.moves {
            for h in m.path.windows(2) {
                self.teleport(m.q, h[0], h[1])?;
            }
        }
        let mut copies: HashMap<(Qubit, NodeId), u32> = HashMap::new();
        for sh in &plan.shares {
            copies.insert((sh.q, sh.from), self.qw[sh.q as usize]);
            for &(u, v) in &sh.edges {
                let (eu, ev) = self.epr(u, v)?;
                let m = self.bit();
                let cu = copies[&(sh.q, u)];
                self.gate(Gate::cx(cu, eu), u);
                self.gate(Gate::measure(eu, m), u);
                self.release(eu, u);
                self.gate(Gate::cond(Pauli::X, m, ev), v);
                copies.insert((sh.q, v), ev);
            }
        }
        for (g, &v) in b.gates.iter().zip(&plan.exec) {
            let mapped = g.remap(|q| {
                if self.qn[q as usize] == v {
                    self.qw[q as usize]
                } else {
                    copies[&(q, v)]
                }
            });
            self.run_gate(&mapped, v)?;
        }
        for sh in plan.shares.iter().rev() {
            let root = self.qw[sh.q as usize];
            for &(_, v) in sh.edges.iter().rev() {
                let c = copies[&(sh.q, v)];
                let m = self.bit();
                self.gate(Gate::h(c), v);
                self.gate(Gate::measure(c, m), v);
                self.release(c, v);
                self.gate(Gate::cond(Pauli::Z, m, root), sh.from);
            }
        }
        for m in &plan.moves {
            if m.ret {
                for h in m.path.windows(2).rev() {
                    self.teleport(m.q, h[1], h[0])?;
                }
            }
            self.settle(m.q)?;
        }
        Ok(())
    }
}

/// Expand every segment of a planned program; `s` caps the buffered EPR
/// halves each node may hold at once.
pub fn expand(model: &HardwareModel, s: &[usize], prog: &Program) -> Result<Expanded> {
    let nn = model.num_nodes();
    let nq = prog.num_qubits();
    let mut last_use: HashMap<Qubit, usize> = HashMap::new();
    for (i, s) in prog.segs.iter().enumerate() {
        for g in s.gates() {
            for &q in g.qubits.iter().filter(|&&q| q >= prog.n_prog) {
                last_use.insert(q, i);
            }
        }
    }
    let mut ex = Expander {
        model,
        ops: Vec::new(),
        next_wire: WIRE_BASE,
        next_bit: prog.num_clbits,
        qw: (0..nq as u32).collect(),
        qn: prog.home.clone(),
        live: HashMap::new(),
        s,
        free_slots: model.nodes.iter().map(|n| (0..n.data_qubits).collect()).collect(),
        comm_used: vec![BTreeSet::new(); nn],
        buffered_now: vec![0; nn],
        peak_buffer: vec![0; nn],
        last_release: HashMap::new(),
    };
    for q in 0..prog.n_prog {
        let v = prog.home[q as usize];
        if ex.free_data(v) == 0 {
            return Err(Error::Capacity(format!("node {v} cannot hold its program qubits")));
        }
        ex.occupy(q, v, None, true);
    }
    let mut alive: BTreeSet<Qubit> = BTreeSet::new();
    for (i, s) in prog.segs.iter().enumerate() {
        for g in s.gates() {
            for &q in g.qubits.iter().filter(|&&q| q >= prog.n_prog) {
                if alive.insert(q) {
                    let v = prog.home[q as usize];
                    if ex.free_data(v) == 0 {
                        return Err(Error::Capacity(format!("node {v} has no slot for ancilla {q}")));
                    }
                    let op = ex.push(OpKind::Alloc, v, &[q]);
                    ex.occupy_op(op, q, v, None, true);
                }
            }
        }
        match s {
            Seg::Local(g) => {
                let v = ex.qn[g.qubits[0] as usize];
                let mapped = g.remap(|q| ex.qw[q as usize]);
                ex.run_gate(&mapped, v)?;
            }
            Seg::Block(b) => ex.block(b)?,
        }
        let done: Vec<Qubit> = alive.iter().copied().filter(|q| last_use[q] == i).collect();
        for q in done {
            alive.remove(&q);
            let w = ex.qw[q as usize];
            let op = ex.push(OpKind::FreeClean, ex.qn[q as usize], &[w]);
            ex.vacate(w, op);
        }
    }
    Ok(Expanded {
        outputs: ex.qw[..prog.n_prog as usize].to_vec(),
        ops: ex.ops,
        n_prog: prog.n_prog,
        num_clbits: ex.next_bit,
        peak_buffer: ex.peak_buffer,
    })
}

/// Operation list for the state-vector simulator.
pub fn to_sim_ops(ex: &Expanded) -> Vec<SimOp> {
    let mut out = Vec::with_capacity(ex.ops.len());
    for op in &ex.ops {
        let w = &op.wires;
        match &op.kind {
            OpKind::Gate(g) => out.push(SimOp::Gate(g.clone())),
            OpKind::Epr { .. } => out.push(SimOp::Epr(w[0], w[1])),
            OpKind::Relocate => out.extend([
                SimOp::Alloc(w[1]),
                SimOp::Gate(Gate::cx(w[0], w[1])),
                SimOp::Gate(Gate::cx(w[1], w[0])),
                SimOp::FreeClean(w[0]),
            ]),
            OpKind::Release => out.push(SimOp::Free(w[0])),
            OpKind::Alloc => out.push(SimOp::Alloc(w[0])),
            OpKind::FreeClean => out.push(SimOp::FreeClean(w[0])),
        }
    }
    out
}
