//! Gate-level circuit representation.
//!
//! A [`Circuit`] is an ordered list of [`Gate`]s over logical qubits plus an
//! optional list of communication blocks annotating contiguous gate ranges.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type Qubit = u32;
pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Z,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GateKind {
    H,
    X,
    Z,
    Rz(f64),
    Cx,
    Cz,
    Cp(f64),
    Measure { bit: u32 },
    /// Pauli applied when classical bit `bit` reads 1.
    Cond { pauli: Pauli, bit: u32 },
    Mcx { controls: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DurationClass {
    OneQ,
    TwoQ,
    Measure,
}

/// How a gate acts on one of its qubits, for commutation purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Diagonal in the computational basis (Z-type).
    Diag,
    /// A function of Pauli X only (CX target, X, conditioned X).
    Flip,
    /// Anything else; never commutes on a shared qubit.
    General,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: SmallVec<[Qubit; 3]>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[Qubit]) -> Result<Gate> {
        let g = Gate { kind, qubits: SmallVec::from_slice(qubits) };
        g.validate()?;
        Ok(g)
    }

    fn raw(kind: GateKind, qubits: &[Qubit]) -> Gate {
        Gate { kind, qubits: SmallVec::from_slice(qubits) }
    }

    pub fn h(q: Qubit) -> Gate {
        Gate::raw(GateKind::H, &[q])
    }
    pub fn x(q: Qubit) -> Gate {
        Gate::raw(GateKind::X, &[q])
    }
    pub fn z(q: Qubit) -> Gate {
        Gate::raw(GateKind::Z, &[q])
    }
    pub fn rz(q: Qubit, theta: f64) -> Gate {
        Gate::raw(GateKind::Rz(theta), &[q])
    }
    pub fn cx(c: Qubit, t: Qubit) -> Gate {
        Gate::raw(GateKind::Cx, &[c, t])
    }
    pub fn cz(a: Qubit, b: Qubit) -> Gate {
        Gate::raw(GateKind::Cz, &[a, b])
    }
    pub fn cp(a: Qubit, b: Qubit, theta: f64) -> Gate {
        Gate::raw(GateKind::Cp(theta), &[a, b])
    }
    pub fn measure(q: Qubit, bit: u32) -> Gate {
        Gate::raw(GateKind::Measure { bit }, &[q])
    }
    pub fn cond(pauli: Pauli, bit: u32, q: Qubit) -> Gate {
        Gate::raw(GateKind::Cond { pauli, bit }, &[q])
    }
    /// Multi-controlled X; the target is the last qubit.
    pub fn mcx(controls: &[Qubit], target: Qubit) -> Gate {
        let mut qs: SmallVec<[Qubit; 3]> = SmallVec::from_slice(controls);
        qs.push(target);
        Gate { kind: GateKind::Mcx { controls: controls.len() as u32 }, qubits: qs }
    }

    pub fn arity(&self) -> usize {
        match self.kind {
            GateKind::Cx | GateKind::Cz | GateKind::Cp(_) => 2,
            GateKind::Mcx { controls } => controls as usize + 1,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qubits.len() != self.arity() {
            return Err(Error::Invalid(format!(
                "gate {} expects {} qubits, got {}",
                self.name(),
                self.arity(),
                self.qubits.len()
            )));
        }
        for (i, q) in self.qubits.iter().enumerate() {
            if self.qubits[..i].contains(q) {
                return Err(Error::Invalid(format!("gate {} repeats qubit {q}", self.name())));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Z => "z",
            GateKind::Rz(_) => "rz",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Cp(_) => "cp",
            GateKind::Measure { .. } => "measure",
            GateKind::Cond { .. } => "cond",
            GateKind::Mcx { .. } => "mcx",
        }
    }

    pub fn duration_class(&self) -> DurationClass {
        match self.kind {
            GateKind::Measure { .. } => DurationClass::Measure,
            GateKind::Cx | GateKind::Cz | GateKind::Cp(_) | GateKind::Mcx { .. } => {
                DurationClass::TwoQ
            }
            _ => DurationClass::OneQ,
        }
    }

    pub fn is_multi(&self) -> bool {
        self.qubits.len() > 1
    }

    /// Role of the `i`-th qubit of this gate.
    pub fn role_at(&self, i: usize) -> Role {
        match self.kind {
            GateKind::H | GateKind::Measure { .. } => Role::General,
            GateKind::X | GateKind::Cond { pauli: Pauli::X, .. } => Role::Flip,
            GateKind::Z
            | GateKind::Rz(_)
            | GateKind::Cz
            | GateKind::Cp(_)
            | GateKind::Cond { pauli: Pauli::Z, .. } => Role::Diag,
            GateKind::Cx | GateKind::Mcx { .. } => {
                if i + 1 == self.qubits.len() {
                    Role::Flip
                } else {
                    Role::Diag
                }
            }
        }
    }

    pub fn role_of(&self, q: Qubit) -> Option<Role> {
        self.qubits.iter().position(|&x| x == q).map(|i| self.role_at(i))
    }

    pub fn touches(&self, q: Qubit) -> bool {
        self.qubits.contains(&q)
    }

    pub fn bit_written(&self) -> Option<u32> {
        match self.kind {
            GateKind::Measure { bit } => Some(bit),
            _ => None,
        }
    }

    pub fn bit_read(&self) -> Option<u32> {
        match self.kind {
            GateKind::Cond { bit, .. } => Some(bit),
            _ => None,
        }
    }

    /// Same gate on relabelled qubits.
    pub fn remap(&self, f: impl Fn(Qubit) -> Qubit) -> Gate {
        Gate { kind: self.kind.clone(), qubits: self.qubits.iter().map(|&q| f(q)).collect() }
    }

    pub fn controls(&self) -> &[Qubit] {
        match self.kind {
            GateKind::Mcx { controls } => &self.qubits[..controls as usize],
            GateKind::Cx => &self.qubits[..1],
            _ => &[],
        }
    }

    pub fn target(&self) -> Option<Qubit> {
        match self.kind {
            GateKind::Mcx { .. } | GateKind::Cx => self.qubits.last().copied(),
            _ => None,
        }
    }
}

/// Conservative commutation test.
///
/// Two gates commute when every shared qubit is acted on with the same
/// non-general role by both, and neither reads or writes a classical bit the
/// other writes.
pub fn commutes(a: &Gate, b: &Gate) -> bool {
    if let Some(w) = a.bit_written() {
        if b.bit_written() == Some(w) || b.bit_read() == Some(w) {
            return false;
        }
    }
    if let Some(w) = b.bit_written() {
        if a.bit_read() == Some(w) {
            return false;
        }
    }
    for (i, q) in a.qubits.iter().enumerate() {
        if let Some(j) = b.qubits.iter().position(|x| x == q) {
            let (ra, rb) = (a.role_at(i), b.role_at(j));
            if ra == Role::General || ra != rb {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    TwoNode,
    Collective,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Cat,
    Tp,
    Mixed,
    Unassigned,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Cat => "cat",
            Protocol::Tp => "tp",
            Protocol::Mixed => "mixed",
            Protocol::Unassigned => "unassigned",
        }
    }
}

/// Annotation over a contiguous range of a circuit's gates.
#[derive(Clone, Debug, PartialEq)]
pub struct CommBlock {
    pub id: usize,
    pub range: Range<usize>,
    pub kind: BlockKind,
    pub nodes: BTreeSet<NodeId>,
    pub protocol: Protocol,
    pub target: Option<NodeId>,
}

impl CommBlock {
    pub fn new(
        id: usize,
        range: Range<usize>,
        nodes: BTreeSet<NodeId>,
        protocol: Protocol,
        target: Option<NodeId>,
    ) -> CommBlock {
        let kind = if nodes.len() > 2 || protocol == Protocol::Mixed {
            BlockKind::Collective
        } else {
            BlockKind::TwoNode
        };
        CommBlock { id, range, kind, nodes, protocol, target }
    }
}

/// Pairwise check of `g` against every gate of a block.
pub fn block_commutes(block: &[Gate], g: &Gate) -> bool {
    block.iter().all(|b| commutes(b, g))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Circuit {
    pub num_qubits: u32,
    pub num_clbits: u32,
    pub gates: Vec<Gate>,
    pub blocks: Vec<CommBlock>,
}

impl Circuit {
    pub fn new(num_qubits: u32) -> Circuit {
        Circuit { num_qubits, ..Default::default() }
    }

    pub fn push(&mut self, g: Gate) {
        debug_assert!(g.qubits.iter().all(|&q| q < self.num_qubits));
        if let Some(b) = g.bit_written().or(g.bit_read()) {
            self.num_clbits = self.num_clbits.max(b + 1);
        }
        self.gates.push(g);
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gates.iter().enumerate() {
            g.validate().map_err(|e| Error::Invalid(format!("gate {i}: {e}")))?;
            if let Some(&q) = g.qubits.iter().find(|&&q| q >= self.num_qubits) {
                return Err(Error::Invalid(format!("gate {i}: qubit {q} out of range")));
            }
        }
        let mut end = 0;
        for b in &self.blocks {
            if b.range.start < end || b.range.end > self.gates.len() || b.range.is_empty() {
                return Err(Error::Invalid(format!("block {} overlaps or is out of range", b.id)));
            }
            end = b.range.end;
        }
        Ok(())
    }

    /// Count of gates acting on two or more qubits.
    pub fn multi_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_multi()).count()
    }

    pub fn count_kind(&self, pred: impl Fn(&GateKind) -> bool) -> usize {
        self.gates.iter().filter(|g| pred(&g.kind)).count()
    }

    /// Gate count in a CX + generic single-qubit basis: every maximal run of
    /// adjacent single-qubit gates on one qubit counts once.
    pub fn basis_gate_count(&self) -> usize {
        let mut last_1q = vec![false; self.num_qubits as usize];
        let mut n = 0;
        for g in &self.gates {
            if g.qubits.len() == 1 && !matches!(g.kind, GateKind::Measure { .. }) {
                let q = g.qubits[0] as usize;
                if !last_1q[q] {
                    n += 1;
                    last_1q[q] = true;
                }
            } else {
                n += 1;
                for &q in &g.qubits {
                    last_1q[q as usize] = false;
                }
            }
        }
        n
    }

    pub fn parse(text: &str) -> Result<Circuit> {
        parse_circuit(text)
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut circ: Option<Circuit> = None;
    let mut clbits: Option<u32> = None;
    let mut blocks = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let int = |s: &str| -> Result<u32> {
            s.parse::<u32>().map_err(|_| parse_err(ln, format!("expected integer, got `{s}`")))
        };
        let real = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| parse_err(ln, format!("expected number, got `{s}`")))
        };
        let head = toks[0].to_ascii_lowercase();
        if head == "qubits" {
            if toks.len() != 2 {
                return Err(parse_err(ln, "usage: qubits N"));
            }
            if circ.is_some() {
                return Err(parse_err(ln, "duplicate qubits header"));
            }
            circ = Some(Circuit::new(int(toks[1])?));
            continue;
        }
        if head == "clbits" {
            clbits = Some(int(toks.get(1).ok_or_else(|| parse_err(ln, "usage: clbits M"))?)?);
            continue;
        }
        let c = circ.as_mut().ok_or_else(|| parse_err(ln, "missing `qubits N` header"))?;
        if head == "block" {
            if toks.len() < 5 {
                return Err(parse_err(ln, "usage: block START END NODES PROTOCOL [TARGET]"));
            }
            let (s, e) = (int(toks[1])? as usize, int(toks[2])? as usize);
            let nodes = toks[3]
                .split(',')
                .map(|t| int(t).map(|v| v as NodeId))
                .collect::<Result<BTreeSet<_>>>()?;
            let protocol = match toks[4] {
                "cat" => Protocol::Cat,
                "tp" => Protocol::Tp,
                "mixed" => Protocol::Mixed,
                "unassigned" => Protocol::Unassigned,
                p => return Err(parse_err(ln, format!("unknown protocol `{p}`"))),
            };
            let target = toks.get(5).map(|t| int(t).map(|v| v as NodeId)).transpose()?;
            blocks.push(CommBlock::new(blocks.len(), s..e, nodes, protocol, target));
            continue;
        }
        let args = &toks[1..];
        let need = |n: usize| -> Result<()> {
            if args.len() != n {
                Err(parse_err(ln, format!("`{head}` takes {n} arguments, got {}", args.len())))
            } else {
                Ok(())
            }
        };
        let g = match head.as_str() {
            "h" | "x" | "z" => {
                need(1)?;
                let q = int(args[0])?;
                match head.as_str() {
                    "h" => Gate::h(q),
                    "x" => Gate::x(q),
                    _ => Gate::z(q),
                }
            }
            "rz" => {
                need(2)?;
                Gate::rz(int(args[0])?, real(args[1])?)
            }
            "cx" | "cz" => {
                need(2)?;
                let (a, b) = (int(args[0])?, int(args[1])?);
                if head == "cx" {
                    Gate::cx(a, b)
                } else {
                    Gate::cz(a, b)
                }
            }
            "cp" => {
                need(3)?;
                Gate::cp(int(args[0])?, int(args[1])?, real(args[2])?)
            }
            "measure" => {
                need(2)?;
                Gate::measure(int(args[0])?, int(args[1])?)
            }
            "cond" => {
                need(3)?;
                let pauli = match args[0] {
                    "x" | "X" => Pauli::X,
                    "z" | "Z" => Pauli::Z,
                    p => return Err(parse_err(ln, format!("cond expects x or z, got `{p}`"))),
                };
                Gate::cond(pauli, int(args[1])?, int(args[2])?)
            }
            "mcx" => {
                if args.is_empty() {
                    return Err(parse_err(ln, "usage: mcx K C1..CK T"));
                }
                let k = int(args[0])? as usize;
                need(k + 2)?;
                let qs = args[1..].iter().map(|s| int(s)).collect::<Result<Vec<_>>>()?;
                Gate::mcx(&qs[..k], qs[k])
            }
            other => return Err(parse_err(ln, format!("unknown gate `{other}`"))),
        };
        g.validate().map_err(|e| parse_err(ln, e.to_string()))?;
        if let Some(&q) = g.qubits.iter().find(|&&q| q >= c.num_qubits) {
            return Err(parse_err(ln, format!("qubit {q} out of range")));
        }
        c.push(g);
    }
    let mut c = circ.ok_or_else(|| parse_err(0, "missing `qubits N` header"))?;
    if let Some(m) = clbits {
        c.num_clbits = c.num_clbits.max(m);
    }
    c.blocks = blocks;
    c.validate()?;
    Ok(c)
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = &self.qubits;
        match &self.kind {
            GateKind::Rz(t) => write!(f, "rz {} {}", q[0], t),
            GateKind::Cp(t) => write!(f, "cp {} {} {}", q[0], q[1], t),
            GateKind::Measure { bit } => write!(f, "measure {} {}", q[0], bit),
            GateKind::Cond { pauli, bit } => {
                let p = if *pauli == Pauli::X { "x" } else { "z" };
                write!(f, "cond {p} {bit} {}", q[0])
            }
            GateKind::Mcx { controls } => {
                write!(f, "mcx {controls}")?;
                for x in q {
                    write!(f, " {x}")?;
                }
                Ok(())
            }
            _ => {
                write!(f, "{}", self.name())?;
                for x in q {
                    write!(f, " {x}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qubits {}", self.num_qubits)?;
        if self.num_clbits > 0 {
            writeln!(f, "clbits {}", self.num_clbits)?;
        }
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        for b in &self.blocks {
            let nodes: Vec<String> = b.nodes.iter().map(|n| n.to_string()).collect();
            write!(
                f,
                "block {} {} {} {}",
                b.range.start,
                b.range.end,
                nodes.join(","),
                b.protocol.as_str()
            )?;
            if let Some(t) = b.target {
                write!(f, " {t}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_checked() {
        assert!(Gate::new(GateKind::Cx, &[0]).is_err());
        assert!(Gate::new(GateKind::Cx, &[1, 1]).is_err());
        assert!(Gate::new(GateKind::Mcx { controls: 2 }, &[0, 1, 2]).is_ok());
    }

    #[test]
    fn commutation_rules() {
        assert!(commutes(&Gate::cx(0, 1), &Gate::rz(2, 0.3)));
        assert!(commutes(&Gate::cz(0, 1), &Gate::rz(0, 0.3)));
        assert!(!commutes(&Gate::cx(0, 1), &Gate::h(1)));
        assert!(commutes(&Gate::cx(0, 1), &Gate::cx(0, 2)));
        assert!(commutes(&Gate::cx(0, 2), &Gate::cx(1, 2)));
        assert!(!commutes(&Gate::cx(0, 1), &Gate::cx(1, 0)));
        assert!(!commutes(&Gate::measure(0, 0), &Gate::cond(Pauli::X, 0, 1)));
    }

    #[test]
    fn block_rule() {
        assert!(block_commutes(&[Gate::cx(0, 1)], &Gate::x(2)));
        assert!(block_commutes(&[Gate::cx(0, 1), Gate::cx(0, 2)], &Gate::rz(0, 1.0)));
        assert!(!block_commutes(&[Gate::cx(0, 1)], &Gate::h(0)));
    }

    #[test]
    fn text_round_trip() {
        let src = "qubits 4\nh 0\ncx 0 1\nrz 2 0.125\ncp 1 2 -0.5\nmcx 2 0 1 3\nmeasure 3 0\ncond z 0 2\n";
        let c = Circuit::parse(src).unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(c.num_clbits, 1);
        let again = Circuit::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = Circuit::parse("qubits 2\nh 0\nfoo 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(Circuit::parse("h 0\n").is_err());
        assert!(Circuit::parse("qubits 2\ncx 0 2\n").is_err());
    }

    #[test]
    fn basis_count_merges_runs() {
        let mut c = Circuit::new(2);
        c.push(Gate::rz(0, 0.1));
        c.push(Gate::h(0));
        c.push(Gate::cx(0, 1));
        c.push(Gate::h(0));
        assert_eq!(c.basis_gate_count(), 3);
    }
}
