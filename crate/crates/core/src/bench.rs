//! Benchmark circuit generators.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Circuit, Gate, GateKind, Qubit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mctr,
    Rca,
    Csp,
    Qft,
    Bv,
    Qaoa,
}

impl Family {
    pub const ALL: [Family; 6] = [Family::Mctr, Family::Rca, Family::Csp, Family::Qft, Family::Bv, Family::Qaoa];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Mctr => "mctr",
            Family::Rca => "rca",
            Family::Csp => "csp",
            Family::Qft => "qft",
            Family::Bv => "bv",
            Family::Qaoa => "qaoa",
        }
    }

    /// Smallest supported qubit count.
    pub fn min_qubits(self) -> u32 {
        match self {
            Family::Csp | Family::Qft => 1,
            Family::Mctr | Family::Bv | Family::Qaoa => 2,
            Family::Rca => 4,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown benchmark family `{s}`")))
    }
}

/// Build a benchmark circuit. `seed` only matters for BV and QAOA.
pub fn generate(family: Family, n: u32, seed: u64) -> Result<Circuit> {
    if n < family.min_qubits() {
        return Err(Error::Invalid(format!("{family} needs at least {} qubits, got {n}", family.min_qubits())));
    }
    Ok(match family {
        Family::Mctr => gen_mctr(n),
        Family::Rca => gen_rca(n),
        Family::Csp => gen_csp(n),
        Family::Qft => gen_qft(n),
        Family::Bv => gen_bv(n, seed),
        Family::Qaoa => gen_qaoa(n, seed),
    })
}

/// GHZ state: H on qubit 0, then CX from qubit 0 to every other qubit.
pub fn gen_csp(n: u32) -> Circuit {
    let mut c = Circuit::new(n);
    c.push(Gate::h(0));
    for t in 1..n {
        c.push(Gate::cx(0, t));
    }
    c
}

/// QFT without the final swaps. Each controlled phase is two CX and two RZ
/// on the lower qubit; the matching RZ on the row qubit is merged right after
/// its H, where it commutes with the CX controls that follow.
pub fn gen_qft(n: u32) -> Circuit {
    let mut c = Circuit::new(n);
    for i in 0..n {
        c.push(Gate::h(i));
        let theta = |j: u32| PI / f64::powi(2.0, (j - i) as i32);
        let row: f64 = (i + 1..n).map(|j| theta(j) / 2.0).sum();
        if i + 1 < n {
            c.push(Gate::rz(i, row));
        }
        for j in i + 1..n {
            let t = theta(j);
            c.push(Gate::rz(j, t / 2.0));
            c.push(Gate::cx(i, j));
            c.push(Gate::rz(j, -t / 2.0));
            c.push(Gate::cx(i, j));
        }
    }
    c
}

/// One X controlled by every other qubit, kept as a single gate.
pub fn gen_mctr(n: u32) -> Circuit {
    let mut c = Circuit::new(n);
    let controls: Vec<Qubit> = (0..n - 1).collect();
    c.push(Gate::mcx(&controls, n - 1));
    c
}

/// Ripple-carry adder with majority and unmajority-add steps. Layout:
/// carry-in 0, then a_i and b_i interleaved, carry-out last. With odd `n`
/// the qubit before carry-out is left idle.
pub fn gen_rca(n: u32) -> Circuit {
    let m = (n - 2) / 2;
    let a = |i: u32| 1 + 2 * i;
    let b = |i: u32| 2 + 2 * i;
    let carry = |i: u32| if i == 0 { 0 } else { a(i - 1) };
    let cout = n - 1;
    let mut c = Circuit::new(n);
    let maj = |c: &mut Circuit, x: Qubit, y: Qubit, z: Qubit| {
        c.push(Gate::cx(z, y));
        c.push(Gate::cx(z, x));
        c.push(Gate::mcx(&[x, y], z));
    };
    let uma = |c: &mut Circuit, x: Qubit, y: Qubit, z: Qubit| {
        c.push(Gate::mcx(&[x, y], z));
        c.push(Gate::cx(z, x));
        c.push(Gate::cx(x, y));
    };
    for i in 0..m {
        maj(&mut c, carry(i), b(i), a(i));
    }
    c.push(Gate::cx(a(m - 1), cout));
    for i in (0..m).rev() {
        uma(&mut c, carry(i), b(i), a(i));
    }
    c
}

/// Bernstein-Vazirani with a seeded secret of `floor(0.7 (n-1))` ones; the
/// last qubit is the phase-kickback target.
pub fn gen_bv(n: u32, seed: u64) -> Circuit {
    let data = n - 1;
    let ones = (data as usize * 7) / 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<Qubit> = (0..data).collect();
    idx.shuffle(&mut rng);
    let mut secret = idx[..ones].to_vec();
    secret.sort_unstable();
    let mut c = Circuit::new(n);
    c.push(Gate::x(data));
    for q in 0..n {
        c.push(Gate::h(q));
    }
    for &q in &secret {
        c.push(Gate::cx(q, data));
    }
    for q in 0..data {
        c.push(Gate::h(q));
    }
    c
}

/// Average degree of the QAOA problem graph.
pub fn qaoa_degree(n: u32) -> u32 {
    30 + n / 12
}

/// One max-cut QAOA layer on a seeded random graph: H layer, CX RZ CX per
/// edge, then an RX mixer written as H RZ H.
pub fn gen_qaoa(n: u32, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_edges = n as u64 * (n as u64 - 1) / 2;
    let want = (n as u64 * qaoa_degree(n) as u64 / 2).min(max_edges);
    let mut all: Vec<(Qubit, Qubit)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    all.shuffle(&mut rng);
    let mut edges = all[..want as usize].to_vec();
    edges.sort_unstable();
    let gamma: f64 = rng.gen_range(0.0..PI);
    let beta: f64 = rng.gen_range(0.0..PI);
    let mut c = Circuit::new(n);
    for q in 0..n {
        c.push(Gate::h(q));
    }
    for (a, b) in edges {
        c.push(Gate::cx(a, b));
        c.push(Gate::rz(b, 2.0 * gamma));
        c.push(Gate::cx(a, b));
    }
    for q in 0..n {
        c.push(Gate::h(q));
        c.push(Gate::rz(q, 2.0 * beta));
        c.push(Gate::h(q));
    }
    c
}

/// Gate and CX totals reported for a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCounts {
    pub qubits: u32,
    /// Gates in a CX plus merged single-qubit basis.
    pub gates: usize,
    pub cx: usize,
}

pub fn counts(c: &Circuit) -> BenchCounts {
    BenchCounts {
        qubits: c.num_qubits,
        gates: c.basis_gate_count(),
        cx: c.count_kind(|k| matches!(k, GateKind::Cx)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{simulate, unitary, BranchPolicy, StateVector};
    use num_complex::Complex64;

    #[test]
    fn csp_makes_ghz() {
        for n in 1..=6 {
            let c = gen_csp(n);
            assert_eq!(c.len(), n as usize);
            let out = &simulate(&c, &StateVector::zero(n as usize), BranchPolicy::All).unwrap()[0].state;
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let last = (1usize << n) - 1;
            for (i, a) in out.amps.iter().enumerate() {
                let want = if i == 0 || i == last { h } else { 0.0 };
                assert!((a.re - want).abs() < 1e-12 && a.im.abs() < 1e-12, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn qft3_is_dft_up_to_bit_reversal() {
        let n = 3;
        let u = unitary(&gen_qft(n).gates, n as usize).unwrap();
        let dim = 1usize << n;
        let rev = |x: usize| (0..n as usize).fold(0, |acc, b| acc | (((x >> b) & 1) << (n as usize - 1 - b)));
        // fix the global phase from one entry
        let phase = u[0][0] / u[0][0].norm();
        for r in 0..dim {
            for col in 0..dim {
                let want = Complex64::from_polar(
                    1.0 / (dim as f64).sqrt(),
                    2.0 * PI * (r * col) as f64 / dim as f64,
                );
                let got = u[rev(r)][col] / phase;
                assert!((got - want).norm() < 1e-9, "({r},{col}) {got} vs {want}");
            }
        }
    }

    #[test]
    fn closed_form_counts() {
        for n in [100u32, 200, 300] {
            let c = counts(&gen_csp(n));
            assert_eq!((c.gates, c.cx), (n as usize, n as usize - 1));
            let q = counts(&gen_qft(n));
            let pairs = (n * (n - 1) / 2) as usize;
            assert_eq!((q.gates, q.cx), (n as usize + 4 * pairs, 2 * pairs));
        }
        assert_eq!(counts(&gen_qft(100)).gates, 19900);
    }

    #[test]
    fn bv_secret_size() {
        let c = counts(&gen_bv(300, 1));
        assert_eq!(c.cx, 209);
        assert_eq!(counts(&gen_bv(100, 9)).cx, 69);
    }

    #[test]
    fn qaoa_shape() {
        let c = gen_qaoa(100, 3);
        let cx = c.count_kind(|k| matches!(k, GateKind::Cx));
        assert_eq!(cx % 2, 0);
        assert_eq!(cx / 2, (100 * qaoa_degree(100) / 2) as usize);
        assert_eq!(gen_qaoa(100, 3), c);
    }

    #[test]
    fn rca_adds() {
        // 2-bit adder on 6 qubits: check every input on the basis
        let n = 6;
        let c = gen_rca(n);
        for x in 0..4usize {
            for y in 0..4usize {
                let mut idx = 0usize;
                for i in 0..2 {
                    idx |= ((x >> i) & 1) << (1 + 2 * i);
                    idx |= ((y >> i) & 1) << (2 + 2 * i);
                }
                let out = &simulate(&c, &StateVector::basis(n as usize, idx), BranchPolicy::All).unwrap()[0].state;
                let hit = out.amps.iter().position(|a| a.norm() > 0.5).unwrap();
                let bit = |k: usize| (hit >> k) & 1;
                let sum = bit(2) | (bit(4) << 1) | (bit(5) << 2);
                assert_eq!(sum, x + y, "x={x} y={y}");
                assert_eq!(bit(1) | (bit(3) << 1), x);
            }
        }
    }

    #[test]
    fn small_sizes_rejected() {
        assert!(generate(Family::Rca, 3, 0).is_err());
        assert!(generate(Family::Csp, 1, 0).is_ok());
        assert!("QFT".parse::<Family>().is_ok());
    }
}
