//! Distributed program representation and the per-block EPR estimate.
//!
//! A program is a sequence of segments. A local segment is one gate whose
//! qubits all sit on one node. A block is a run of gates executed together:
//! some qubits are shared to other nodes by cat-entanglement, others are
//! teleported to the node where the gates using them run.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::hw::{ChannelKind, HardwareModel};
use crate::ir::{Gate, NodeId, Qubit, Role};
use crate::route::{Router, Routing};

/// Location of a qubit that is not allocated.
pub const NOWHERE: NodeId = usize::MAX;

/// Teleportation of one qubit along `path`, optionally back again.
#[derive(Clone, Debug, PartialEq)]
pub struct Move {
    pub q: Qubit,
    pub path: Vec<NodeId>,
    pub ret: bool,
}

impl Move {
    pub fn from(&self) -> NodeId {
        self.path[0]
    }

    pub fn to(&self) -> NodeId {
        *self.path.last().expect("non-empty path")
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

/// Cat-entangled copies of `q` along a tree rooted at `from`.
#[derive(Clone, Debug, PartialEq)]
pub struct Share {
    pub q: Qubit,
    pub from: NodeId,
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Plan {
    pub target: NodeId,
    pub moves: Vec<Move>,
    pub shares: Vec<Share>,
    /// Node each gate of the block runs on.
    pub exec: Vec<NodeId>,
    pub epr: usize,
    pub cross: usize,
}

impl Plan {
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        let mut s: BTreeSet<NodeId> = self.exec.iter().copied().collect();
        for m in &self.moves {
            s.extend(m.path.iter().copied());
        }
        for sh in &self.shares {
            s.insert(sh.from);
            for &(a, b) in &sh.edges {
                s.insert(a);
                s.insert(b);
            }
        }
        s
    }

    /// EPR halves each node holds during the block.
    pub fn halves(&self, n: usize) -> Vec<usize> {
        let mut need = vec![0; n];
        for sh in &self.shares {
            for &(a, b) in &sh.edges {
                need[a] += 1;
                need[b] += 1;
            }
        }
        for m in &self.moves {
            let k = if m.ret { 2 } else { 1 };
            for w in m.path.windows(2) {
                need[w[0]] += k;
                need[w[1]] += k;
            }
        }
        need
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub gates: Vec<Gate>,
    pub plan: Plan,
    /// (qubit, node) pairs whose return teleport may be skipped.
    pub lazy: BTreeSet<(Qubit, NodeId)>,
    /// Produced by splitting; never split again.
    pub split_done: bool,
}

impl Block {
    pub fn new(gates: Vec<Gate>) -> Block {
        Block { gates, plan: Plan::default(), lazy: BTreeSet::new(), split_done: false }
    }

    pub fn qubits(&self) -> BTreeSet<Qubit> {
        self.gates.iter().flat_map(|g| g.qubits.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Seg {
    Local(Gate),
    Block(Block),
}

impl Seg {
    pub fn gates(&self) -> &[Gate] {
        match self {
            Seg::Local(g) => std::slice::from_ref(g),
            Seg::Block(b) => &b.gates,
        }
    }

    pub fn epr(&self) -> usize {
        match self {
            Seg::Local(_) => 0,
            Seg::Block(b) => b.plan.epr,
        }
    }

    pub fn touches(&self, q: Qubit) -> bool {
        self.gates().iter().any(|g| g.touches(q))
    }
}

/// A partitioned circuit. Qubits at or above `n_prog` are ancillas created
/// by splitting; `home` gives every qubit's initial node.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub n_prog: u32,
    pub num_clbits: u32,
    pub home: Vec<NodeId>,
    pub segs: Vec<Seg>,
}

impl Program {
    pub fn num_qubits(&self) -> usize {
        self.home.len()
    }

    pub fn epr(&self) -> usize {
        self.segs.iter().map(Seg::epr).sum()
    }

    pub fn cross(&self) -> usize {
        self.segs
            .iter()
            .map(|s| match s {
                Seg::Block(b) => b.plan.cross,
                Seg::Local(_) => 0,
            })
            .sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.segs.iter().filter_map(|s| match s {
            Seg::Block(b) => Some(b),
            Seg::Local(_) => None,
        })
    }

    pub fn gate_count(&self) -> usize {
        self.segs.iter().map(|s| s.gates().len()).sum()
    }
}

/// Multi-controlled gates that do not fit are split this way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Fold per-node controls into ancillas, then pair lone controls.
    Collective,
    /// Chain of two-node pieces.
    Chain,
    /// Lower to basis gates and aggregate bursts.
    Basis,
}

/// Everything the passes need besides the program itself.
pub struct Ctx<'a> {
    pub model: &'a HardwareModel,
    pub router: &'a Router,
    pub s: Vec<usize>,
    pub lazy: bool,
    pub split: SplitMode,
    /// Largest block fusion may build.
    pub max_block: usize,
}

impl<'a> Ctx<'a> {
    pub fn new(model: &'a HardwareModel, router: &'a Router, s: Vec<usize>) -> Ctx<'a> {
        Ctx { model, router, s, lazy: true, split: SplitMode::Collective, max_block: 2048 }
    }

    /// Energy of `epr` pairs of which `cross` are inter-cluster: infidelity
    /// plus generation time over the decoherence coefficient.
    pub fn epr_cost(&self, epr: usize, cross: usize) -> f64 {
        let t = &self.model.timing;
        let w_in = -t.f_iep.ln() + t.t_iep / t.t_decoherence;
        let w_out = -t.f_oep.ln() + t.t_oep / t.t_decoherence;
        (epr - cross) as f64 * w_in + cross as f64 * w_out
    }

    /// EPR cost of a plan plus the two CX that settle each teleported qubit
    /// into a data slot.
    pub fn plan_cost(&self, p: &Plan) -> f64 {
        let landings: usize = p.moves.iter().map(|m| 1 + m.ret as usize).sum();
        self.epr_cost(p.epr, p.cross) + landings as f64 * -2.0 * self.model.timing.f_2q.ln()
    }

    pub fn cost(&self, p: &Program) -> f64 {
        p.blocks().map(|b| self.plan_cost(&b.plan)).sum()
    }
}

/// Current location of every qubit and data-slot occupancy per node.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub n_prog: u32,
    pub loc: Vec<NodeId>,
    pub occ: Vec<usize>,
}

impl State {
    pub fn initial(n_prog: u32, home: &[NodeId], nodes: usize) -> State {
        let mut loc = vec![NOWHERE; home.len()];
        let mut occ = vec![0; nodes];
        let n = n_prog as usize;
        loc[..n].copy_from_slice(&home[..n]);
        for &v in &home[..n] {
            occ[v] += 1;
        }
        State { n_prog, loc, occ }
    }

    /// Free data qubits at `v`, possibly negative.
    pub fn free(&self, model: &HardwareModel, v: NodeId) -> isize {
        model.nodes[v].data_qubits as isize - self.occ[v] as isize
    }

    pub fn grow(&mut self, n: usize) {
        if self.loc.len() < n {
            self.loc.resize(n, NOWHERE);
        }
    }

    pub fn alloc(&mut self, q: Qubit, v: NodeId) {
        self.grow(q as usize + 1);
        if self.loc[q as usize] == NOWHERE {
            self.loc[q as usize] = v;
            self.occ[v] += 1;
        }
    }

    pub fn release(&mut self, q: Qubit) {
        let v = self.loc[q as usize];
        if v != NOWHERE {
            self.occ[v] -= 1;
            self.loc[q as usize] = NOWHERE;
        }
    }

    /// Apply the one-way moves of a plan.
    pub fn apply(&mut self, plan: &Plan) {
        for m in plan.moves.iter().filter(|m| !m.ret) {
            self.occ[m.from()] -= 1;
            self.occ[m.to()] += 1;
            self.loc[m.q as usize] = m.to();
        }
    }

    pub fn colocated(&self, g: &Gate) -> bool {
        g.qubits.windows(2).all(|w| self.loc[w[0] as usize] == self.loc[w[1] as usize])
    }
}

/// Whether a move of `q` to `to` returns afterwards.
pub type ReturnRule<'r> = &'r dyn Fn(Qubit, NodeId, &State) -> bool;

/// Optimistic rule used while fusing: stay when lazy is on and `to` has room.
pub fn optimistic_return<'c>(ctx: &'c Ctx<'c>) -> impl Fn(Qubit, NodeId, &State) -> bool + 'c {
    move |_q, to, st| !(ctx.lazy && st.free(ctx.model, to) > 0)
}

fn find(p: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while p[r] != r {
        r = p[r];
    }
    p[x] = r;
    r
}

/// Cheapest feasible plan for running `gates` as one block, or `None` when
/// no target node has enough communication capacity.
///
/// Qubits used only diagonally are shared; the rest are grouped into sets
/// that must meet, and sets spanning several nodes gather at the target.
/// Node `v` may hold at most `min(s_v, free_v) + comm_v` EPR halves at once.
pub fn estimate(ctx: &Ctx, st: &State, gates: &[Gate], ret: ReturnRule) -> Option<Plan> {
    let mut qs: Vec<Qubit> = gates.iter().flat_map(|g| g.qubits.iter().copied()).collect();
    qs.sort_unstable();
    qs.dedup();
    let idx: HashMap<Qubit, usize> = qs.iter().enumerate().map(|(i, &q)| (q, i)).collect();
    let loc: Vec<NodeId> = qs.iter().map(|&q| st.loc[q as usize]).collect();
    if loc.contains(&NOWHERE) {
        return None;
    }
    let nodes: BTreeSet<NodeId> = loc.iter().copied().collect();
    if nodes.len() <= 1 {
        let v = nodes.into_iter().next().unwrap_or(0);
        return Some(Plan { target: v, exec: vec![v; gates.len()], ..Plan::default() });
    }
    let mut diag = vec![true; qs.len()];
    for g in gates {
        for (i, q) in g.qubits.iter().enumerate() {
            if g.role_at(i) != Role::Diag {
                diag[idx[q]] = false;
            }
        }
    }
    let mut parent: Vec<usize> = (0..qs.len()).collect();
    let mut partners: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); qs.len()];
    for g in gates {
        let gi: Vec<usize> = g.qubits.iter().map(|q| idx[q]).collect();
        let hard: Vec<usize> = gi.iter().copied().filter(|&i| !diag[i]).collect();
        for w in hard.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
        if let Some(&h) = hard.first() {
            for &i in gi.iter().filter(|&&i| diag[i]) {
                partners[h].insert(i);
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in (0..qs.len()).filter(|&i| !diag[i]) {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let comp_partners: BTreeMap<usize, BTreeSet<usize>> = comps
        .iter()
        .map(|(&r, m)| (r, m.iter().flat_map(|&i| partners[i].iter().copied()).collect()))
        .collect();
    let env = Env { ctx, st, gates, qs: &qs, idx: &idx, loc: &loc, diag: &diag, ret };
    let mut best: Option<Plan> = None;
    for &x in &nodes {
        for gather in [false, true] {
            let Some(p) = env.plan_at(x, gather, &comps, &comp_partners, &mut parent) else { continue };
            let better = best.as_ref().is_none_or(|b| (p.epr, p.cross, p.target) < (b.epr, b.cross, b.target));
            if better {
                best = Some(p);
            }
        }
    }
    best
}

struct Env<'e> {
    ctx: &'e Ctx<'e>,
    st: &'e State,
    gates: &'e [Gate],
    qs: &'e [Qubit],
    idx: &'e HashMap<Qubit, usize>,
    loc: &'e [NodeId],
    diag: &'e [bool],
    ret: ReturnRule<'e>,
}

impl Env<'_> {
    fn returns(&self, i: usize, to: NodeId) -> bool {
        let q = self.qs[i];
        q >= self.st.n_prog || (self.ret)(q, to, self.st)
    }

    fn plan_at(
        &self,
        x: NodeId,
        gather: bool,
        comps: &BTreeMap<usize, Vec<usize>>,
        partners: &BTreeMap<usize, BTreeSet<usize>>,
        parent: &mut [usize],
    ) -> Option<Plan> {
        let (ctx, model) = (self.ctx, self.ctx.model);
        let mut place: HashMap<usize, NodeId> = HashMap::new();
        for (&r, members) in comps {
            let span: BTreeSet<NodeId> = members.iter().map(|&i| self.loc[i]).collect();
            let p = if span.len() > 1 || gather {
                x
            } else {
                let u = *span.iter().next().expect("non-empty");
                if u == x {
                    x
                } else {
                    let stay = partners[&r].iter().filter(|&&p| self.loc[p] != u).count();
                    let hops = ctx.router.hops(u, x)?;
                    let go: usize = members.iter().map(|&i| hops * if self.returns(i, x) { 2 } else { 1 }).sum::<usize>()
                        + partners[&r].iter().filter(|&&p| self.loc[p] != x).count();
                    if go < stay {
                        x
                    } else {
                        u
                    }
                }
            };
            place.insert(r, p);
        }
        let n = self.qs.len();
        let mut dests: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
        let mut exec = Vec::with_capacity(self.gates.len());
        for g in self.gates {
            let gi: Vec<usize> = g.qubits.iter().map(|q| self.idx[q]).collect();
            let v = match gi.iter().find(|&&i| !self.diag[i]) {
                Some(&i) => place[&find(parent, i)],
                None => {
                    let mut cands: Vec<NodeId> = vec![x];
                    let mut rest: Vec<NodeId> = gi.iter().map(|&i| self.loc[i]).collect();
                    rest.sort_unstable();
                    cands.extend(rest);
                    let cost = |v: NodeId| gi.iter().filter(|&&i| self.loc[i] != v && !dests[i].contains(&v)).count();
                    *cands.iter().min_by_key(|&&v| cost(v)).expect("non-empty")
                }
            };
            for &i in &gi {
                if self.diag[i] && self.loc[i] != v {
                    dests[i].insert(v);
                }
            }
            exec.push(v);
        }
        let nn = model.num_nodes();
        let mut arrivals = vec![0usize; nn];
        let mut plan = Plan { target: x, exec, ..Plan::default() };
        for i in (0..n).filter(|&i| !self.diag[i]) {
            let to = place[&find(parent, i)];
            if to == self.loc[i] {
                continue;
            }
            let path = ctx.router.path(self.loc[i], to)?.to_vec();
            let ret = self.returns(i, to);
            if !ret {
                arrivals[to] += 1;
            }
            let k = if ret { 2 } else { 1 };
            plan.epr += k * (path.len() - 1);
            plan.cross += k * path.windows(2).filter(|w| !model.same_cluster(w[0], w[1])).count();
            plan.moves.push(Move { q: self.qs[i], path, ret });
        }
        let mut busy: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for i in (0..n).filter(|&i| self.diag[i] && !dests[i].is_empty()) {
            let rp = ctx.router.multicast(model, self.loc[i], &dests[i], &busy)?;
            if ctx.router.mode == Routing::Parallel {
                busy.extend(rp.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))));
            }
            plan.epr += rp.epr;
            plan.cross += rp.cross;
            plan.shares.push(Share { q: self.qs[i], from: self.loc[i], edges: rp.edges });
        }
        let need = plan.halves(nn);
        for v in 0..nn {
            let room = self.st.free(model, v) - arrivals[v] as isize;
            if room < 0 {
                return None;
            }
            let w = ctx.s[v].min(room as usize) + model.nodes[v].comm_qubits;
            if need[v] > w {
                return None;
            }
        }
        Some(plan)
    }
}

/// Number of inter-cluster hops in a plan, recomputed from its routes.
pub fn count_cross(model: &HardwareModel, plan: &Plan) -> usize {
    let inter = |a: NodeId, b: NodeId| model.channel(a, b).is_some_and(|c| c.kind == ChannelKind::Inter);
    let mut c = 0;
    for m in &plan.moves {
        let k = if m.ret { 2 } else { 1 };
        c += k * m.path.windows(2).filter(|w| inter(w[0], w[1])).count();
    }
    for s in &plan.shares {
        c += s.edges.iter().filter(|&&(a, b)| inter(a, b)).count();
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(data: usize, comm: usize) -> (HardwareModel, Router) {
        let m = HardwareModel::single_cluster(3, data, comm);
        let r = Router::new(&m, Routing::Mst);
        (m, r)
    }

    fn always(_: Qubit, _: NodeId, _: &State) -> bool {
        true
    }

    #[test]
    fn colocated_is_free() {
        let (m, r) = setup(4, 1);
        let ctx = Ctx::new(&m, &r, vec![0; 3]);
        let st = State::initial(2, &[1, 1], 3);
        let p = estimate(&ctx, &st, &[Gate::cx(0, 1)], &always).unwrap();
        assert_eq!((p.epr, p.target), (0, 1));
    }

    #[test]
    fn remote_cx_is_one_share() {
        let (m, r) = setup(4, 1);
        let ctx = Ctx::new(&m, &r, vec![0; 3]);
        let st = State::initial(2, &[0, 1], 3);
        let p = estimate(&ctx, &st, &[Gate::cx(0, 1)], &always).unwrap();
        assert_eq!(p.epr, 1);
        assert_eq!(p.shares.len(), 1);
        assert_eq!(p.exec, vec![1]);
    }

    #[test]
    fn general_use_moves_with_return() {
        let (m, r) = setup(4, 1);
        let ctx = Ctx::new(&m, &r, vec![1; 3]);
        let st = State::initial(2, &[0, 1], 3);
        let g = [Gate::h(0), Gate::cx(0, 1), Gate::cx(1, 0)];
        let p = estimate(&ctx, &st, &g, &always).unwrap();
        assert_eq!(p.epr, 2);
        assert!(p.moves[0].ret);
        let lazy = |_: Qubit, _: NodeId, _: &State| false;
        assert_eq!(estimate(&ctx, &st, &g, &lazy).unwrap().epr, 1);
    }

    #[test]
    fn capacity_limits_fan_in() {
        let (m, r) = setup(4, 1);
        let st = State::initial(3, &[0, 1, 2], 3);
        let g = [Gate::mcx(&[0, 1], 2)];
        let tight = Ctx::new(&m, &r, vec![0; 3]);
        assert!(estimate(&tight, &st, &g, &always).is_none());
        let roomy = Ctx::new(&m, &r, vec![1; 3]);
        assert_eq!(estimate(&roomy, &st, &g, &always).unwrap().epr, 2);
    }

    #[test]
    fn halves_count_both_ends() {
        let p = Plan {
            moves: vec![Move { q: 0, path: vec![0, 1, 2], ret: true }],
            shares: vec![Share { q: 1, from: 2, edges: vec![(2, 0)] }],
            ..Plan::default()
        };
        assert_eq!(p.halves(3), vec![3, 4, 3]);
    }
}
