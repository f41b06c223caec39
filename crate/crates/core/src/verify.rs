//! Small statevector simulator used as a semantic oracle.
//!
//! Qubits ("wires") are allocated and released dynamically so that protocol
//! expansions, which create many short-lived EPR halves, stay within a few
//! live qubits. Mid-circuit measurements branch; classically conditioned
//! Paulis read the branch's bits.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ir::{Circuit, Gate, GateKind, Pauli};

pub const MAX_LIVE: usize = 16;
pub const MAX_BRANCH_MEASUREMENTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub n: usize,
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(n: usize) -> StateVector {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n, amps }
    }

    pub fn basis(n: usize, index: usize) -> StateVector {
        let mut s = StateVector::zero(n);
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[index] = Complex64::new(1.0, 0.0);
        s
    }

    /// Haar-ish random state from Gaussian amplitudes.
    pub fn random(n: usize, rng: &mut impl Rng) -> StateVector {
        let mut amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(gauss(rng), gauss(rng)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector { n, amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n != other.n {
            return Err(Error::Simulation(format!("dimension mismatch {} vs {}", self.n, other.n)));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Tensor with `k` extra qubits in |0>, placed as the highest bits.
    pub fn extend_zero(&self, k: usize) -> StateVector {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (self.n + k)];
        amps[..self.amps.len()].copy_from_slice(&self.amps);
        StateVector { n: self.n + k, amps }
    }
}

fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// True iff `|<a|b>| >= 1 - tol`.
pub fn equal_up_to_phase(a: &StateVector, b: &StateVector, tol: f64) -> Result<bool> {
    Ok(a.inner(b)?.norm() >= 1.0 - tol)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimOp {
    Gate(Gate),
    /// Fresh wire in |0>.
    Alloc(u32),
    /// Fresh pair of wires in (|00> + |11>)/sqrt 2.
    Epr(u32, u32),
    /// Drop a wire that is in a computational basis state.
    Free(u32),
    /// Drop a wire that must be back in |0>.
    FreeClean(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchPolicy {
    /// Enumerate every outcome when the measurement count allows it,
    /// otherwise fall back to sampling.
    All,
    Sample { seed: u64, samples: usize },
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub prob: f64,
    pub bits: HashMap<u32, bool>,
    pub state: StateVector,
}

#[derive(Clone)]
struct Machine {
    pos: HashMap<u32, usize>,
    order: Vec<u32>,
    amps: Vec<Complex64>,
    bits: HashMap<u32, bool>,
    prob: f64,
}

const EPS: f64 = 1e-12;

impl Machine {
    fn live(&self) -> usize {
        self.order.len()
    }

    fn bit(&self, w: u32) -> Result<usize> {
        self.pos.get(&w).copied().ok_or_else(|| Error::Simulation(format!("wire {w} is not live")))
    }

    fn alloc(&mut self, w: u32) -> Result<()> {
        if self.pos.contains_key(&w) {
            return Err(Error::Simulation(format!("wire {w} allocated twice")));
        }
        if self.live() >= MAX_LIVE {
            return Err(Error::Simulation(format!("more than {MAX_LIVE} live qubits")));
        }
        self.pos.insert(w, self.order.len());
        self.order.push(w);
        self.amps.resize(self.amps.len() * 2, Complex64::new(0.0, 0.0));
        Ok(())
    }

    fn free(&mut self, w: u32, clean: bool) -> Result<()> {
        let b = self.bit(w)?;
        let mask = 1usize << b;
        let p1: f64 = self.amps.iter().enumerate().filter(|(i, _)| i & mask != 0).map(|(_, a)| a.norm_sqr()).sum();
        let p0: f64 = self.amps.iter().enumerate().filter(|(i, _)| i & mask == 0).map(|(_, a)| a.norm_sqr()).sum();
        let keep = if p1 < 1e-9 * (p0 + p1) {
            0
        } else if p0 < 1e-9 * (p0 + p1) {
            mask
        } else {
            return Err(Error::Simulation(format!("wire {w} freed while in superposition")));
        };
        if clean && keep != 0 {
            return Err(Error::Simulation(format!("wire {w} not returned to |0>")));
        }
        // move the freed qubit to the top position, then truncate
        let top = self.live() - 1;
        if b != top {
            self.swap_bits(b, top);
            let other = self.order[top];
            self.order.swap(b, top);
            self.pos.insert(other, b);
        }
        let half = self.amps.len() / 2;
        let bitval = if keep == 0 { 0 } else { half };
        let new: Vec<Complex64> = self.amps[bitval..bitval + half].to_vec();
        self.amps = new;
        self.order.pop();
        self.pos.remove(&w);
        Ok(())
    }

    fn swap_bits(&mut self, a: usize, b: usize) {
        let (ma, mb) = (1usize << a, 1usize << b);
        for i in 0..self.amps.len() {
            if i & ma != 0 && i & mb == 0 {
                let j = (i & !ma) | mb;
                self.amps.swap(i, j);
            }
        }
    }

    fn apply_1q(&mut self, b: usize, m: [[Complex64; 2]; 2]) {
        let mask = 1usize << b;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (a0, a1) = (self.amps[i], self.amps[j]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_x_ctrl(&mut self, ctrl_mask: usize, t: usize) {
        let tm = 1usize << t;
        for i in 0..self.amps.len() {
            if i & tm == 0 && i & ctrl_mask == ctrl_mask {
                self.amps.swap(i, i | tm);
            }
        }
    }

    fn apply_phase_mask(&mut self, mask: usize, phase: Complex64) {
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *a *= phase;
            }
        }
    }

    fn apply(&mut self, g: &Gate) -> Result<()> {
        let bits: Vec<usize> = g.qubits.iter().map(|&w| self.bit(w)).collect::<Result<_>>()?;
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match &g.kind {
            GateKind::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_1q(bits[0], [[c(s, 0.), c(s, 0.)], [c(s, 0.), c(-s, 0.)]]);
            }
            GateKind::X => self.apply_x_ctrl(0, bits[0]),
            GateKind::Z => self.apply_phase_mask(1 << bits[0], c(-1., 0.)),
            GateKind::Rz(t) => {
                let (e0, e1) = (Complex64::from_polar(1.0, -t / 2.0), Complex64::from_polar(1.0, t / 2.0));
                self.apply_1q(bits[0], [[e0, c(0., 0.)], [c(0., 0.), e1]]);
            }
            GateKind::Cx => self.apply_x_ctrl(1 << bits[0], bits[1]),
            GateKind::Cz => self.apply_phase_mask((1 << bits[0]) | (1 << bits[1]), c(-1., 0.)),
            GateKind::Cp(t) => {
                self.apply_phase_mask((1 << bits[0]) | (1 << bits[1]), Complex64::from_polar(1.0, *t))
            }
            GateKind::Mcx { controls } => {
                let k = *controls as usize;
                let mask = bits[..k].iter().fold(0, |m, b| m | (1 << b));
                self.apply_x_ctrl(mask, bits[k]);
            }
            GateKind::Cond { pauli, bit } => {
                let v = *self
                    .bits
                    .get(bit)
                    .ok_or_else(|| Error::Simulation(format!("classical bit {bit} read before write")))?;
                if v {
                    match pauli {
                        Pauli::X => self.apply_x_ctrl(0, bits[0]),
                        Pauli::Z => self.apply_phase_mask(1 << bits[0], c(-1., 0.)),
                    }
                }
            }
            GateKind::Measure { .. } => unreachable!("measurements branch in the driver"),
        }
        Ok(())
    }

    fn outcome_prob(&self, b: usize) -> f64 {
        let mask = 1usize << b;
        let tot: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        let p1: f64 = self.amps.iter().enumerate().filter(|(i, _)| i & mask != 0).map(|(_, a)| a.norm_sqr()).sum();
        p1 / tot
    }

    fn project(&mut self, b: usize, v: bool) {
        let mask = 1usize << b;
        let mut nrm = 0.0;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if ((i & mask) != 0) != v {
                *a = Complex64::new(0.0, 0.0);
            } else {
                nrm += a.norm_sqr();
            }
        }
        let s = nrm.sqrt();
        self.amps.iter_mut().for_each(|a| *a /= s);
    }
}

/// Run `ops` starting from `input` on wires `inputs` (bit i of the input
/// state is `inputs[i]`). Returns one branch per measurement outcome path,
/// each with the final state over `outputs`.
pub fn run_ops(
    ops: &[SimOp],
    inputs: &[u32],
    input: &StateVector,
    outputs: &[u32],
    policy: BranchPolicy,
) -> Result<Vec<Branch>> {
    if input.n != inputs.len() {
        return Err(Error::Simulation("input state does not match input wires".into()));
    }
    let mut m = Machine {
        pos: HashMap::new(),
        order: Vec::new(),
        amps: input.amps.clone(),
        bits: HashMap::new(),
        prob: 1.0,
    };
    if inputs.len() > MAX_LIVE {
        return Err(Error::Simulation(format!("{} input qubits exceed limit", inputs.len())));
    }
    for (i, &w) in inputs.iter().enumerate() {
        m.pos.insert(w, i);
        m.order.push(w);
    }
    let measurements = ops
        .iter()
        .filter(|o| matches!(o, SimOp::Gate(g) if matches!(g.kind, GateKind::Measure{..})))
        .count();
    let mut out = Vec::new();
    match policy {
        BranchPolicy::All if measurements <= MAX_BRANCH_MEASUREMENTS => {
            explore(ops, 0, m, outputs, None, &mut out)?;
        }
        BranchPolicy::All => {
            sample(ops, m, outputs, 0x5eed, 100, &mut out)?;
        }
        BranchPolicy::Sample { seed, samples } => {
            sample(ops, m, outputs, seed, samples, &mut out)?;
        }
    }
    Ok(out)
}

fn sample(
    ops: &[SimOp],
    m: Machine,
    outputs: &[u32],
    seed: u64,
    samples: usize,
    out: &mut Vec<Branch>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples.max(1) {
        explore(ops, 0, m.clone(), outputs, Some(&mut rng), out)?;
    }
    Ok(())
}

fn explore(
    ops: &[SimOp],
    start: usize,
    mut m: Machine,
    outputs: &[u32],
    mut rng: Option<&mut ChaCha8Rng>,
    out: &mut Vec<Branch>,
) -> Result<()> {
    for i in start..ops.len() {
        match &ops[i] {
            SimOp::Alloc(w) => m.alloc(*w)?,
            SimOp::Epr(a, b) => {
                m.alloc(*a)?;
                m.alloc(*b)?;
                m.apply(&Gate::h(*a))?;
                m.apply(&Gate::cx(*a, *b))?;
            }
            SimOp::Free(w) => m.free(*w, false)?,
            SimOp::FreeClean(w) => m.free(*w, true)?,
            SimOp::Gate(g) => {
                if let GateKind::Measure { bit } = g.kind {
                    let b = m.bit(g.qubits[0])?;
                    let p1 = m.outcome_prob(b);
                    if let Some(r) = rng.as_deref_mut() {
                        let v = r.gen::<f64>() < p1;
                        m.project(b, v);
                        m.bits.insert(bit, v);
                        m.prob *= if v { p1 } else { 1.0 - p1 };
                        continue;
                    }
                    for (v, p) in [(false, 1.0 - p1), (true, p1)] {
                        if p > EPS {
                            let mut child = m.clone();
                            child.project(b, v);
                            child.bits.insert(bit, v);
                            child.prob *= p;
                            explore(ops, i + 1, child, outputs, None, out)?;
                        }
                    }
                    return Ok(());
                }
                m.apply(g)?;
            }
        }
    }
    out.push(Branch { prob: m.prob, bits: m.bits.clone(), state: extract(&m, outputs)? });
    Ok(())
}

/// Reorder the live state so that `outputs[i]` is bit i. Every live wire
/// must be listed.
fn extract(m: &Machine, outputs: &[u32]) -> Result<StateVector> {
    if outputs.len() != m.live() {
        let extra: Vec<u32> = m.order.iter().filter(|w| !outputs.contains(w)).copied().collect();
        return Err(Error::Simulation(format!(
            "live wires {:?} not covered by outputs (extra {:?})",
            m.order, extra
        )));
    }
    let src: Vec<usize> = outputs.iter().map(|w| m.bit(*w)).collect::<Result<_>>()?;
    let n = outputs.len();
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    for (i, a) in m.amps.iter().enumerate() {
        let mut j = 0;
        for (k, &b) in src.iter().enumerate() {
            if i & (1 << b) != 0 {
                j |= 1 << k;
            }
        }
        amps[j] = *a;
    }
    Ok(StateVector { n, amps })
}

/// Simulate a logical circuit (measurements branch) on `input`.
pub fn simulate(circ: &Circuit, input: &StateVector, policy: BranchPolicy) -> Result<Vec<Branch>> {
    let n = circ.num_qubits as usize;
    if n > MAX_LIVE {
        return Err(Error::Simulation(format!("{n} qubits exceed the simulator limit")));
    }
    let wires: Vec<u32> = (0..circ.num_qubits).collect();
    let ops: Vec<SimOp> = circ.gates.iter().cloned().map(SimOp::Gate).collect();
    run_ops(&ops, &wires, input, &wires, policy)
}

/// Unitary of a measurement-free gate list over `n` qubits, as columns.
pub fn unitary(gates: &[Gate], n: usize) -> Result<Vec<Vec<Complex64>>> {
    let wires: Vec<u32> = (0..n as u32).collect();
    let ops: Vec<SimOp> = gates.iter().cloned().map(SimOp::Gate).collect();
    (0..1usize << n)
        .map(|i| {
            let b = run_ops(&ops, &wires, &StateVector::basis(n, i), &wires, BranchPolicy::All)?;
            if b.len() != 1 {
                return Err(Error::Simulation("unitary() needs a measurement-free circuit".into()));
            }
            Ok(b.into_iter().next().unwrap().state.amps)
        })
        .collect()
}

/// Matrix equality up to one global phase.
pub fn unitaries_equal(a: &[Vec<Complex64>], b: &[Vec<Complex64>], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut phase = None;
    for (ca, cb) in a.iter().zip(b) {
        for (x, y) in ca.iter().zip(cb) {
            if x.norm() > 1e-6 || y.norm() > 1e-6 {
                if (x.norm() - y.norm()).abs() > tol {
                    return false;
                }
                let p = y / x;
                match phase {
                    None => phase = Some(p),
                    Some(q) => {
                        if (p - q).norm() > tol {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

/// Outcome of comparing a compiled program against its logical circuit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equivalence {
    pub states: usize,
    pub branches: usize,
    /// Largest `1 - |<want|got>|` over every state and branch.
    pub max_error: f64,
}

impl Equivalence {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_error <= tol
    }
}

/// Run `ops` on `states` seeded random inputs over wires `0..n` and compare
/// every measurement branch with the measurement-free circuit.
pub fn check_equivalence(circ: &Circuit, ops: &[SimOp], outputs: &[u32], states: usize, seed: u64) -> Result<Equivalence> {
    if circ.gates.iter().any(|g| matches!(g.kind, GateKind::Measure { .. })) {
        return Err(Error::Simulation("reference circuit must not measure".into()));
    }
    let n = circ.num_qubits as usize;
    let inputs: Vec<u32> = (0..circ.num_qubits).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Equivalence { states, branches: 0, max_error: 0.0 };
    for _ in 0..states {
        let s = StateVector::random(n, &mut rng);
        let want = simulate(circ, &s, BranchPolicy::All)?.remove(0).state;
        for b in run_ops(ops, &inputs, &s, outputs, BranchPolicy::All)? {
            out.branches += 1;
            out.max_error = out.max_error.max(1.0 - want.inner(&b.state)?.norm());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn hadamard_on_zero() {
        let mut c = Circuit::new(1);
        c.push(Gate::h(0));
        let b = simulate(&c, &StateVector::zero(1), BranchPolicy::All).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0].state.amps[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((b[0].state.amps[1].re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn phase_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = StateVector::random(3, &mut rng);
        let mut b = a.clone();
        let ph = Complex64::from_polar(1.0, 0.7);
        b.amps.iter_mut().for_each(|x| *x *= ph);
        assert!(equal_up_to_phase(&a, &b, 1e-12).unwrap());
        assert!(!equal_up_to_phase(&StateVector::basis(1, 0), &StateVector::basis(1, 1), 1e-9).unwrap());
        let mut c = a.clone();
        c.amps[0] += Complex64::new(1e-12, 0.0);
        assert!(equal_up_to_phase(&a, &c, 1e-9).unwrap());
        assert!(a.inner(&StateVector::zero(2)).is_err());
    }

    #[test]
    fn measurement_branches_sum_to_one() {
        let mut c = Circuit::new(2);
        c.push(Gate::h(0));
        c.push(Gate::cx(0, 1));
        c.push(Gate::measure(0, 0));
        let b = simulate(&c, &StateVector::zero(2), BranchPolicy::All).unwrap();
        assert_eq!(b.len(), 2);
        assert!((b.iter().map(|x| x.prob).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_requires_basis_state() {
        let ops = vec![SimOp::Alloc(5), SimOp::Gate(Gate::h(5)), SimOp::Free(5)];
        assert!(run_ops(&ops, &[], &StateVector::zero(0), &[], BranchPolicy::All).is_err());
        let ops = vec![SimOp::Alloc(5), SimOp::Gate(Gate::x(5)), SimOp::Free(5)];
        assert!(run_ops(&ops, &[], &StateVector::zero(0), &[], BranchPolicy::All).is_ok());
    }

    #[test]
    fn sampling_is_seeded() {
        let mut c = Circuit::new(1);
        c.push(Gate::h(0));
        c.push(Gate::measure(0, 0));
        let p = BranchPolicy::Sample { seed: 3, samples: 20 };
        let a = simulate(&c, &StateVector::zero(1), p).unwrap();
        let b = simulate(&c, &StateVector::zero(1), p).unwrap();
        let bits = |v: &[Branch]| v.iter().map(|x| x.bits[&0]).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
