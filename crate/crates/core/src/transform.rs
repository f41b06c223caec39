//! Communication transformation: replanning, fusion, splitting and lazy
//! teleportation, iterated while the EPR total keeps dropping.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::baseline::burst;
use crate::error::{Error, Result};
use crate::ir::{block_commutes, Gate, GateKind, NodeId, Qubit};
use crate::hw::HardwareModel;
use crate::lower::lower_mcx;
use crate::program::{estimate, optimistic_return, Block, Ctx, Plan, Program, Seg, SplitMode, State};

/// Local gates fusion may carry between two blocks.
pub const PENDING_CAP: usize = 256;

fn always(_: Qubit, _: NodeId, _: &State) -> bool {
    true
}

/// Ancilla lifetimes: allocated on first use, freed after the last.
struct Lifetimes {
    from: Qubit,
    remaining: HashMap<Qubit, usize>,
}

impl Lifetimes {
    fn new<'s>(segs: impl IntoIterator<Item = &'s Seg>, from: Qubit) -> Lifetimes {
        let mut lt = Lifetimes { from, remaining: HashMap::new() };
        for s in segs {
            lt.add(s.gates(), 1);
        }
        lt
    }

    fn add(&mut self, gates: &[Gate], sign: isize) {
        for g in gates {
            for &q in g.qubits.iter().filter(|&&q| q >= self.from) {
                let e = self.remaining.entry(q).or_default();
                *e = (*e as isize + sign) as usize;
            }
        }
    }

    fn enter(&self, gates: &[Gate], st: &mut State, home: &[NodeId]) {
        let n = st.n_prog;
        for g in gates {
            for &q in g.qubits.iter().filter(|&&q| q >= n) {
                st.alloc(q, home[q as usize]);
            }
        }
    }

    fn leave(&mut self, gates: &[Gate], st: &mut State) {
        for g in gates {
            for &q in g.qubits.iter().filter(|&&q| q >= self.from) {
                if let Some(r) = self.remaining.get_mut(&q) {
                    *r -= 1;
                    if *r == 0 {
                        st.release(q);
                    }
                }
            }
        }
    }
}

/// Recompute every block plan in program order, tracking where qubits are.
///
/// Local gates whose qubits have drifted apart become blocks. Blocks that do
/// not fit are broken up, split or lowered.
pub fn replan(ctx: &Ctx, prog: &Program) -> Result<Program> {
    let mut home = prog.home.clone();
    let mut st = State::initial(prog.n_prog, &home, ctx.model.num_nodes());
    let segs = walk(ctx, &mut st, &mut home, prog.segs.clone(), prog.n_prog)?;
    Ok(Program { home, segs, ..prog.clone() })
}

enum Placed {
    Emit(Vec<Seg>),
    Requeue(Vec<Seg>),
}

fn walk(ctx: &Ctx, st: &mut State, home: &mut Vec<NodeId>, segs: Vec<Seg>, from: Qubit) -> Result<Vec<Seg>> {
    let mut lt = Lifetimes::new(&segs, from);
    let mut work: VecDeque<Seg> = segs.into();
    let mut out = Vec::new();
    while let Some(seg) = work.pop_front() {
        lt.enter(seg.gates(), st, home);
        let gates = seg.gates().to_vec();
        let placed = match seg {
            Seg::Local(g) if st.colocated(&g) => Placed::Emit(vec![Seg::Local(g)]),
            Seg::Local(g) => Placed::Requeue(vec![Seg::Block(Block::new(vec![g]))]),
            Seg::Block(b) => place_block(ctx, st, home, b)?,
        };
        match placed {
            Placed::Emit(s) => {
                out.extend(s);
                lt.leave(&gates, st);
            }
            Placed::Requeue(s) => {
                lt.add(&gates, -1);
                for x in s.iter().rev() {
                    lt.add(x.gates(), 1);
                }
                for x in s.into_iter().rev() {
                    work.push_front(x);
                }
            }
        }
    }
    Ok(out)
}

fn is_mcx(b: &Block) -> bool {
    b.gates.len() == 1 && matches!(b.gates[0].kind, GateKind::Mcx { controls } if controls >= 2)
}

fn place_block(ctx: &Ctx, st: &mut State, home: &mut Vec<NodeId>, mut b: Block) -> Result<Placed> {
    let hinted = |q: Qubit, to: NodeId, _: &State| !b.lazy.contains(&(q, to));
    let mut plan = None;
    if ctx.lazy && !b.lazy.is_empty() {
        plan = estimate(ctx, st, &b.gates, &hinted);
    }
    if plan.is_none() {
        plan = estimate(ctx, st, &b.gates, &always);
    }
    if is_mcx(&b) && !b.split_done && plan.as_ref().is_none_or(|p| p.epr > 0) {
        if ctx.split == SplitMode::Basis {
            return Ok(Placed::Requeue(basis_segs(st, &b.gates[0])?));
        }
        if let Some((segs, st2, home2)) = try_split(ctx, st, home, &b.gates[0]) {
            let e: usize = segs.iter().map(Seg::epr).sum();
            if plan.as_ref().is_none_or(|p| e < p.epr) {
                *st = st2;
                *home = home2;
                return Ok(Placed::Emit(segs));
            }
        }
    }
    if let Some(p) = &plan {
        if !p.moves.is_empty() && b.gates.len() > 1 && gatewise_cost(ctx, st, &b.gates).is_some_and(|c| c < ctx.plan_cost(p) - 1e-12) {
            plan = None;
        }
    }
    match plan {
        Some(p) if p.epr == 0 => Ok(Placed::Emit(b.gates.into_iter().map(Seg::Local).collect())),
        Some(p) => {
            st.apply(&p);
            b.plan = p;
            Ok(Placed::Emit(vec![Seg::Block(b)]))
        }
        None if b.gates.len() > 1 => Ok(Placed::Requeue(
            b.gates
                .into_iter()
                .map(|g| Seg::Block(Block { gates: vec![g], plan: Plan::default(), lazy: b.lazy.clone(), split_done: b.split_done }))
                .collect(),
        )),
        None if b.gates[0].qubits.len() > 2 => Ok(Placed::Requeue(basis_segs(st, &b.gates[0])?)),
        None => Err(Error::Capacity(format!(
            "no node can host the communication for gate {} on qubits {:?}",
            b.gates[0].name(),
            b.gates[0].qubits.as_slice()
        ))),
    }
}

/// Cost of running the gates of a block one by one, or `None` if one of them
/// cannot be placed.
fn gatewise_cost(ctx: &Ctx, st: &State, gates: &[Gate]) -> Option<f64> {
    let mut st = st.clone();
    let mut total = 0.0;
    for g in gates {
        let p = estimate(ctx, &st, std::slice::from_ref(g), &always)?;
        total += ctx.plan_cost(&p);
        st.apply(&p);
    }
    Some(total)
}

/// Split in a scratch state and plan the pieces; `None` if splitting does
/// not apply or the pieces cannot be placed.
fn try_split(ctx: &Ctx, st: &State, home: &[NodeId], g: &Gate) -> Option<(Vec<Seg>, State, Vec<NodeId>)> {
    let mut st2 = st.clone();
    let mut home2 = home.to_vec();
    let first = home2.len() as Qubit;
    let segs = match ctx.split {
        SplitMode::Collective => split_collective(ctx, &st2, &mut home2, g)?,
        SplitMode::Chain => split_chain(ctx, &st2, &mut home2, g)?,
        SplitMode::Basis => basis_segs(&st2, g).ok()?,
    };
    st2.grow(home2.len());
    let out = walk(ctx, &mut st2, &mut home2, segs, first).ok()?;
    Some((out, st2, home2))
}

fn new_ancilla(st: &mut State, home: &mut Vec<NodeId>, v: NodeId) -> Qubit {
    let a = home.len() as Qubit;
    home.push(v);
    st.alloc(a, v);
    a
}

fn piece(g: Gate) -> Seg {
    Seg::Block(Block { split_done: true, ..Block::new(vec![g]) })
}

/// Controls of `g` grouped by current node, the target node excluded.
fn by_node(st: &State, g: &Gate) -> (NodeId, Vec<Qubit>, BTreeMap<NodeId, Vec<Qubit>>) {
    let t = g.target().expect("mcx target");
    let tn = st.loc[t as usize];
    let mut at_t = Vec::new();
    let mut rest: BTreeMap<NodeId, Vec<Qubit>> = BTreeMap::new();
    for &c in g.controls() {
        let v = st.loc[c as usize];
        if v == tn {
            at_t.push(c);
        } else {
            rest.entry(v).or_default().push(c);
        }
    }
    (tn, at_t, rest)
}

/// Fold the controls held by one node into an ancilla on that node, then
/// pair remaining lone controls through Toffoli pieces, nearest to the
/// target first, until the main gate fits.
pub fn split_collective(ctx: &Ctx, st: &State, home: &mut Vec<NodeId>, g: &Gate) -> Option<Vec<Seg>> {
    let model = ctx.model;
    let mut st2 = st.clone();
    let t = g.target()?;
    let (tn, mut main, rest) = by_node(st, g);
    let mut pre: Vec<Seg> = Vec::new();
    for (v, cs) in rest {
        if cs.len() >= 2 && st2.free(model, v) >= 1 {
            let a = new_ancilla(&mut st2, home, v);
            pre.push(Seg::Local(Gate::mcx(&cs, a)));
            main.push(a);
        } else {
            main.extend(cs);
        }
    }
    let mut fits = false;
    loop {
        if estimate(ctx, &st2, &[Gate::mcx(&main, t)], &always).is_some() {
            fits = true;
            break;
        }
        let tc = model.cluster_of(tn);
        let mut lone: Vec<(bool, usize, NodeId, Qubit)> = main
            .iter()
            .map(|&c| (c, st2.loc[c as usize]))
            .filter(|&(_, v)| v != tn)
            .map(|(c, v)| (model.cluster_of(v) != tc, ctx.router.hops(v, tn).unwrap_or(usize::MAX), v, c))
            .collect();
        lone.sort_unstable();
        if lone.len() < 2 {
            break;
        }
        let (c1, c2) = (lone[0].3, lone[1].3);
        let Some(host) = [lone[0].2, lone[1].2].into_iter().find(|&v| st2.free(model, v) >= 1) else { break };
        let a = new_ancilla(&mut st2, home, host);
        pre.push(piece(Gate::mcx(&[c1, c2], a)));
        main.retain(|&c| c != c1 && c != c2);
        main.push(a);
    }
    let core = if fits { vec![piece(Gate::mcx(&main, t))] } else { target_side_split(model, &mut st2, home, &main, t, tn)? };
    if pre.is_empty() && fits {
        return None;
    }
    let post: Vec<Seg> = pre.iter().rev().cloned().collect();
    let mut out = pre;
    out.extend(core);
    out.extend(post);
    Some(out)
}

/// One clean ancilla `b` on the target's node: `b ^= AND(G1)`, then the main
/// gate over the other controls and `b`, then uncompute `b`. `G1` takes the
/// nearer half of the remote controls; both pieces may split again.
fn target_side_split(
    model: &HardwareModel,
    st: &mut State,
    home: &mut Vec<NodeId>,
    main: &[Qubit],
    t: Qubit,
    tn: NodeId,
) -> Option<Vec<Seg>> {
    let mut remote: Vec<(usize, Qubit)> = main
        .iter()
        .filter(|&&c| st.loc[c as usize] != tn)
        .map(|&c| (model.cluster_of(st.loc[c as usize]), c))
        .collect();
    if remote.len() < 2 || st.free(model, tn) < 1 {
        return None;
    }
    remote.sort_unstable();
    let g1: Vec<Qubit> = remote[..remote.len() / 2].iter().map(|x| x.1).collect();
    let b = new_ancilla(st, home, tn);
    let mut g2: Vec<Qubit> = main.iter().copied().filter(|c| !g1.contains(c)).collect();
    g2.push(b);
    let load = |g1: &[Qubit]| {
        let g = if g1.len() == 1 { Gate::cx(g1[0], b) } else { Gate::mcx(g1, b) };
        Seg::Block(Block::new(vec![g]))
    };
    Some(vec![load(&g1), Seg::Block(Block::new(vec![Gate::mcx(&g2, t)])), load(&g1)])
}

/// Chain of two-node pieces: each remote node ANDs its controls with the
/// previous partial result into a fresh ancilla.
pub fn split_chain(ctx: &Ctx, st: &State, home: &mut Vec<NodeId>, g: &Gate) -> Option<Vec<Seg>> {
    let mut st2 = st.clone();
    let t = g.target()?;
    let (_, mut main, rest) = by_node(st, g);
    let mut pre = Vec::new();
    let mut prev: Option<Qubit> = None;
    for (v, cs) in rest {
        let mut ctrls = cs;
        ctrls.extend(prev);
        if ctrls.len() == 1 {
            prev = Some(ctrls[0]);
            continue;
        }
        if st2.free(ctx.model, v) < 1 {
            return None;
        }
        let a = new_ancilla(&mut st2, home, v);
        pre.push(piece(Gate::mcx(&ctrls, a)));
        prev = Some(a);
    }
    if pre.is_empty() {
        return None;
    }
    main.extend(prev);
    let post: Vec<Seg> = pre.iter().rev().cloned().collect();
    let mut out = pre;
    out.push(piece(Gate::mcx(&main, t)));
    out.extend(post);
    Some(out)
}

/// Lower to basis gates with dirty helpers from the target's node first,
/// then aggregate bursts.
pub fn basis_segs(st: &State, g: &Gate) -> Result<Vec<Seg>> {
    let t = g.target().ok_or_else(|| Error::Invalid("multi-qubit gate without target".into()))?;
    let k = g.controls().len();
    let tn = st.loc[t as usize];
    let mut helpers: Vec<(bool, Qubit)> = (0..st.n_prog)
        .filter(|&q| !g.touches(q) && st.loc[q as usize] != crate::program::NOWHERE)
        .map(|q| (st.loc[q as usize] != tn, q))
        .collect();
    helpers.sort_unstable();
    let h: Vec<Qubit> = helpers.into_iter().take(k.saturating_sub(2)).map(|x| x.1).collect();
    let low = lower_mcx(g.controls(), t, &h)?;
    let loc = |q: Qubit| st.loc[q as usize];
    Ok(burst(&low, &loc)
        .into_iter()
        .map(|s| match s {
            Seg::Block(b) => Seg::Block(Block { split_done: true, ..b }),
            x => x,
        })
        .collect())
}

/// Greedy fusion of neighbouring blocks when the fused estimate does not
/// exceed the separate ones. Blocks on disjoint qubits are stepped over.
pub fn fuse(ctx: &Ctx, prog: &Program) -> Program {
    let home = prog.home.clone();
    let mut st = State::initial(prog.n_prog, &home, ctx.model.num_nodes());
    let mut lt = Lifetimes::new(&prog.segs, prog.n_prog);
    let ret = optimistic_return(ctx);
    let plan_of = |st: &State, gates: &[Gate]| estimate(ctx, st, gates, &ret);
    let mut out: Vec<Seg> = Vec::new();
    let mut cur: Option<(Block, Option<Plan>)> = None;
    let mut pending: Vec<Seg> = Vec::new();

    fn flush(out: &mut Vec<Seg>, st: &mut State, cur: Option<(Block, Option<Plan>)>, pending: &mut Vec<Seg>) {
        if let Some((b, p)) = cur {
            if let Some(p) = &p {
                st.apply(p);
            }
            out.push(Seg::Block(b));
        }
        out.append(pending);
    }

    for seg in &prog.segs {
        lt.enter(seg.gates(), &mut st, &home);
        match seg {
            Seg::Local(g) => {
                if cur.is_some() {
                    pending.push(Seg::Local(g.clone()));
                    if pending.len() > PENDING_CAP {
                        flush(&mut out, &mut st, cur.take(), &mut pending);
                    }
                } else {
                    out.push(Seg::Local(g.clone()));
                }
            }
            Seg::Block(b) => {
                let bp = plan_of(&st, &b.gates);
                let Some((cb, cp)) = cur.take() else {
                    cur = Some((b.clone(), bp));
                    lt.leave(seg.gates(), &mut st);
                    continue;
                };
                let mut wall = b.gates.clone();
                let mut defer = vec![false; pending.len()];
                for (i, item) in pending.iter().enumerate().rev() {
                    if item.gates().iter().all(|g| block_commutes(&wall, g)) {
                        defer[i] = true;
                    } else {
                        wall.extend(item.gates().iter().cloned());
                    }
                }
                let absorbed: Vec<&Seg> = pending.iter().zip(&defer).filter(|x| !*x.1).map(|x| x.0).collect();
                let mut gates = cb.gates.clone();
                let mut extra = 0.0;
                for a in absorbed {
                    gates.extend(a.gates().iter().cloned());
                    if let Seg::Block(x) = a {
                        extra += plan_of(&st, &x.gates).map_or(0.0, |p| ctx.plan_cost(&p));
                    }
                }
                gates.extend(b.gates.iter().cloned());
                let fp = if gates.len() <= ctx.max_block { plan_of(&st, &gates) } else { None };
                let accept = match (&fp, &cp, &bp) {
                    (Some(f), Some(x), Some(y)) => {
                        let c = |p: &Plan| ctx.plan_cost(p);
                        c(f) <= c(x) + c(y) + extra + 1e-12
                    }
                    (Some(_), _, _) => true,
                    _ => false,
                };
                if accept {
                    let mut nb = Block::new(gates);
                    nb.lazy = cb.lazy.union(&b.lazy).copied().collect();
                    cur = Some((nb, fp));
                    pending = pending.drain(..).zip(defer).filter(|x| x.1).map(|x| x.0).collect();
                } else {
                    let disjoint = cb.qubits().is_disjoint(&b.qubits());
                    if disjoint && pending.iter().all(|s| s.gates().iter().all(|g| block_commutes(&b.gates, g))) {
                        pending.push(Seg::Block(b.clone()));
                        cur = Some((cb, cp));
                    } else {
                        flush(&mut out, &mut st, Some((cb, cp)), &mut pending);
                        cur = Some((b.clone(), bp));
                    }
                }
            }
        }
        lt.leave(seg.gates(), &mut st);
    }
    flush(&mut out, &mut st, cur, &mut pending);
    Program { segs: out, ..prog.clone() }
}

/// Mark return teleports that can be skipped: the qubit is not used again,
/// or its next use meets another qubit already on the destination node.
pub fn lazy_pass(ctx: &Ctx, prog: &Program) -> Program {
    let mut out = prog.clone();
    if !ctx.lazy {
        return out;
    }
    let n = out.segs.len();
    let mut next: Vec<Vec<(Qubit, Option<usize>)>> = vec![Vec::new(); n];
    let mut seen: HashMap<Qubit, usize> = HashMap::new();
    for i in (0..n).rev() {
        let qs: BTreeSet<Qubit> = out.segs[i].gates().iter().flat_map(|g| g.qubits.iter().copied()).collect();
        if matches!(out.segs[i], Seg::Block(_)) {
            next[i] = qs.iter().map(|&q| (q, seen.get(&q).copied())).collect();
        }
        for q in qs {
            seen.insert(q, i);
        }
    }
    let mut st = State::initial(prog.n_prog, &prog.home, ctx.model.num_nodes());
    let mut lt = Lifetimes::new(&prog.segs, prog.n_prog);
    for i in 0..n {
        let gates = out.segs[i].gates().to_vec();
        lt.enter(&gates, &mut st, &prog.home);
        let mut hints = BTreeSet::new();
        if let Seg::Block(b) = &out.segs[i] {
            let mut cands: BTreeSet<NodeId> = b.plan.nodes();
            cands.extend(b.qubits().iter().map(|&q| st.loc[q as usize]));
            for &(q, nx) in &next[i] {
                if q >= prog.n_prog {
                    continue;
                }
                for &x in &cands {
                    let ok = match nx {
                        None => true,
                        Some(j) => out.segs[j]
                            .gates()
                            .iter()
                            .flat_map(|g| g.qubits.iter())
                            .any(|&p| p != q && st.loc.get(p as usize) == Some(&x)),
                    };
                    if ok {
                        hints.insert((q, x));
                    }
                }
            }
        }
        if let Seg::Block(b) = &mut out.segs[i] {
            b.lazy = hints;
            st.apply(&b.plan);
        }
        lt.leave(&gates, &mut st);
    }
    out
}

/// Replan, then alternate fusion and lazy teleportation while any stage
/// strictly lowers the EPR cost estimate. Returns the program and the estimate after
/// each accepted step.
pub fn fixpoint(ctx: &Ctx, prog: &Program, fusion: bool) -> Result<(Program, Vec<f64>)> {
    let mut cur = replan(ctx, prog)?;
    let mut trace = vec![ctx.cost(&cur)];
    loop {
        let mut improved = false;
        // fusion that only ties can still open a lazy return, so the pair is
        // also tried as one stage
        let fuse_lazy = |ctx: &Ctx, p: &Program| -> Result<Program> { Ok(lazy_pass(ctx, &replan(ctx, &fuse(ctx, p))?)) };
        let stages: [(bool, &dyn Fn(&Ctx, &Program) -> Result<Program>); 3] = [
            (fusion, &|c, p| Ok(fuse(c, p))),
            (ctx.lazy, &|c, p| Ok(lazy_pass(c, p))),
            (fusion && ctx.lazy, &fuse_lazy),
        ];
        for (on, stage) in stages {
            if !on {
                continue;
            }
            if let Ok(c) = stage(ctx, &cur).and_then(|p| replan(ctx, &p)) {
                let e = ctx.cost(&c);
                if e < trace[trace.len() - 1] - 1e-12 {
                    cur = c;
                    trace.push(e);
                    improved = true;
                }
            }
        }
        if !improved {
            return Ok((cur, trace));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::burst_aggregate;
    use crate::fixtures;
    use crate::route::{Router, Routing};

    #[test]
    fn three_node_example_fuses_to_two() {
        let (c, m, map) = fixtures::three_node_example();
        let r = Router::new(&m, Routing::Mst);
        let ctx = Ctx::new(&m, &r, vec![2; 3]);
        let p = burst_aggregate(&c, &map);
        assert_eq!(p.blocks().count(), 5);
        let (out, trace) = fixpoint(&ctx, &p, true).unwrap();
        assert_eq!(out.epr(), 2, "{trace:?}");
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn three_node_example_baseline_is_five() {
        let (c, m, map) = fixtures::three_node_example();
        let r = Router::new(&m, Routing::Shortest);
        let ctx = Ctx { lazy: false, split: SplitMode::Chain, ..Ctx::new(&m, &r, vec![0; 3]) };
        let out = replan(&ctx, &burst_aggregate(&c, &map)).unwrap();
        assert_eq!(out.epr(), 5);
    }

    #[test]
    fn cccx_split_and_basis() {
        let (c, m, map) = fixtures::four_node_cccx();
        let r = Router::new(&m, Routing::Mst);
        let ctx = Ctx::new(&m, &r, map.s.clone());
        let (split, _) = fixpoint(&ctx, &burst_aggregate(&c, &map), true).unwrap();
        assert!(split.epr() <= 6, "{}", split.epr());
        let basis = Ctx { split: SplitMode::Basis, lazy: false, ..Ctx::new(&m, &r, map.s.clone()) };
        let low = replan(&basis, &burst_aggregate(&c, &map)).unwrap();
        assert!(low.epr() >= 11, "{}", low.epr());
    }
}
