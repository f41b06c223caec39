//! Multi-controlled X lowering into {H, X, RZ, CX}.
//!
//! T and T-dagger are emitted as RZ(±π/4), which differ from T by a global
//! phase only. Helper qubits are "dirty": they may hold any state and are
//! restored.

use std::f64::consts::PI;

use crate::error::Result;
use crate::ir::{Gate, GateKind, Qubit};

const T: f64 = PI / 4.0;

fn t(q: Qubit) -> Gate {
    Gate::rz(q, T)
}

fn tdg(q: Qubit) -> Gate {
    Gate::rz(q, -T)
}

/// Exact Toffoli, 6 CX.
pub fn toffoli(a: Qubit, b: Qubit, c: Qubit) -> Vec<Gate> {
    vec![
        Gate::h(c),
        Gate::cx(b, c),
        tdg(c),
        Gate::cx(a, c),
        t(c),
        Gate::cx(b, c),
        tdg(c),
        Gate::cx(a, c),
        t(b),
        t(c),
        Gate::h(c),
        Gate::cx(a, b),
        t(a),
        tdg(b),
        Gate::cx(a, b),
    ]
}

/// Toffoli up to a relative phase, 3 CX.
fn rccx(a: Qubit, b: Qubit, c: Qubit, out: &mut Vec<Gate>) {
    out.extend([
        Gate::h(c),
        t(c),
        Gate::cx(b, c),
        tdg(c),
        Gate::cx(a, c),
        t(c),
        Gate::cx(b, c),
        tdg(c),
        Gate::h(c),
    ]);
}

/// Three-control X without helpers (gray-code phase construction), 14 CX.
pub fn c3x(c: [Qubit; 3], tq: Qubit) -> Vec<Gate> {
    let p = PI / 8.0;
    let q = [c[0], c[1], c[2], tq];
    let mut g = vec![Gate::h(tq)];
    g.extend(q.iter().map(|&x| Gate::rz(x, p)));
    let seq: [(usize, usize, f64); 13] = [
        (0, 1, -p),
        (0, 1, 0.0),
        (1, 2, -p),
        (0, 2, p),
        (1, 2, -p),
        (0, 2, 0.0),
        (2, 3, -p),
        (1, 3, p),
        (2, 3, -p),
        (0, 3, p),
        (2, 3, -p),
        (1, 3, p),
        (2, 3, -p),
    ];
    for (a, b, ph) in seq {
        g.push(Gate::cx(q[a], q[b]));
        if ph != 0.0 {
            g.push(Gate::rz(q[b], ph));
        }
    }
    g.push(Gate::cx(q[0], q[3]));
    g.push(Gate::h(tq));
    g
}

fn action(q0: Qubit, q1: Qubit, q2: Qubit, out: &mut Vec<Gate>) {
    out.extend([Gate::h(q2), t(q2), Gate::cx(q0, q2), tdg(q2), Gate::cx(q1, q2)]);
}

fn reset(q0: Qubit, q1: Qubit, q2: Qubit, out: &mut Vec<Gate>) {
    out.extend([Gate::cx(q1, q2), t(q2), Gate::cx(q0, q2), tdg(q2), Gate::h(q2)]);
}

/// k controls with at least k-2 dirty helpers, 8k-6 CX.
fn dirty_chain(c: &[Qubit], tq: Qubit, a: &[Qubit], out: &mut Vec<Gate>) {
    let k = c.len();
    for _ in 0..2 {
        out.extend(toffoli(c[k - 1], a[k - 3], tq));
        for i in (0..k - 3).rev() {
            action(c[i + 2], a[i], a[i + 1], out);
        }
        rccx(c[0], c[1], a[0], out);
        for i in 0..k - 3 {
            reset(c[i + 2], a[i], a[i + 1], out);
        }
    }
}

/// Number of helpers [`lower_mcx`] will touch for `k` controls given `avail`.
pub fn helpers_needed(k: usize, avail: usize) -> usize {
    match k {
        0..=3 => 0,
        _ if avail >= k - 2 => k - 2,
        _ if avail >= 1 => 1,
        _ => 0,
    }
}

/// Lower `MCX(controls -> target)` using the given dirty helpers.
///
/// Three or fewer controls need no helper. With at least `k-2` helpers a
/// linear chain is used; with fewer the controls are split in two halves
/// around a single helper, each half borrowing the other half as helpers.
/// Without any helper a quadratic-size root recursion is emitted.
pub fn lower_mcx(controls: &[Qubit], target: Qubit, helpers: &[Qubit]) -> Result<Vec<Gate>> {
    let mut out = Vec::new();
    lower_into(controls, target, helpers, &mut out)?;
    Ok(out)
}

fn lower_into(c: &[Qubit], tq: Qubit, helpers: &[Qubit], out: &mut Vec<Gate>) -> Result<()> {
    let k = c.len();
    match k {
        0 => out.push(Gate::x(tq)),
        1 => out.push(Gate::cx(c[0], tq)),
        2 => out.extend(toffoli(c[0], c[1], tq)),
        3 => out.extend(c3x([c[0], c[1], c[2]], tq)),
        _ if helpers.len() >= k - 2 => dirty_chain(c, tq, &helpers[..k - 2], out),
        _ if !helpers.is_empty() => {
            let h = helpers[0];
            let m1 = k.div_ceil(2);
            let (c1, c2) = c.split_at(m1);
            let mut b_ctrl = c2.to_vec();
            b_ctrl.push(h);
            let mut a_help = c2.to_vec();
            a_help.push(tq);
            for _ in 0..2 {
                lower_into(c1, h, &a_help, out)?;
                lower_into(&b_ctrl, tq, c1, out)?;
            }
        }
        _ => root_chain(c, tq, 1.0, out)?,
    }
    Ok(())
}

/// Controlled `X^a`, exact up to global phase.
fn c_xpow(c: Qubit, tq: Qubit, a: f64, out: &mut Vec<Gate>) {
    if a == 1.0 {
        out.push(Gate::cx(c, tq));
        return;
    }
    let th = PI * a;
    out.extend([
        Gate::h(tq),
        Gate::rz(c, th / 2.0),
        Gate::cx(c, tq),
        Gate::rz(tq, -th / 2.0),
        Gate::cx(c, tq),
        Gate::rz(tq, th / 2.0),
        Gate::h(tq),
    ]);
}

/// Helper-free multi-controlled `X^a` by recursion on square roots; the
/// inner toggles of the last control borrow the target as their helper.
/// Quadratic in the number of controls.
fn root_chain(c: &[Qubit], tq: Qubit, a: f64, out: &mut Vec<Gate>) -> Result<()> {
    match c.len() {
        0 if a == 1.0 => out.push(Gate::x(tq)),
        0 => out.extend([Gate::h(tq), Gate::rz(tq, PI * a), Gate::h(tq)]),
        1 => c_xpow(c[0], tq, a, out),
        k => {
            let (rest, last) = (&c[..k - 1], c[k - 1]);
            c_xpow(last, tq, a / 2.0, out);
            lower_into(rest, last, &[tq], out)?;
            c_xpow(last, tq, -a / 2.0, out);
            lower_into(rest, last, &[tq], out)?;
            root_chain(rest, tq, a / 2.0, out)?;
        }
    }
    Ok(())
}

/// Replace every MCX in `gates` by its lowering; helpers come from `helpers_for`.
pub fn lower_all(gates: &[Gate], helpers_for: impl Fn(&Gate) -> Vec<Qubit>) -> Result<Vec<Gate>> {
    let mut out = Vec::with_capacity(gates.len());
    for g in gates {
        if let GateKind::Mcx { .. } = g.kind {
            let c = g.controls();
            lower_into(c, g.target().expect("mcx has a target"), &helpers_for(g), &mut out)?;
        } else {
            out.push(g.clone());
        }
    }
    Ok(out)
}

/// Serial duration estimate of the lowering, used for buffer sizing.
pub fn lowered_duration(k: usize, avail_helpers: usize, t_1q: f64, t_2q: f64) -> f64 {
    let c: Vec<Qubit> = (0..k as Qubit).collect();
    let h: Vec<Qubit> = (0..avail_helpers as Qubit).map(|i| 10_000 + i).collect();
    lower_mcx(&c, 9_999, &h)
        .map(|g| {
            g.iter().map(|x| if x.qubits.len() > 1 { t_2q } else { t_1q }).sum()
        })
        .unwrap_or(0.0)
}
