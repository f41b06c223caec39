//! Estimated program fidelity and the annealing energy.

use serde::{Deserialize, Serialize};

use crate::hw::Timing;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub f_1q: f64,
    pub f_2q: f64,
    pub f_ms: f64,
    pub f_iep: f64,
    pub f_oep: f64,
    /// Decoherence coefficient, in CX units.
    pub t_decoherence: f64,
    /// Use the decoherence factor `1 - e^{-t/T}` instead of `e^{-t/T}`.
    pub as_printed: bool,
}

impl CostParams {
    pub fn from_timing(t: &Timing) -> CostParams {
        CostParams {
            f_1q: t.f_1q,
            f_2q: t.f_2q,
            f_ms: t.f_ms,
            f_iep: t.f_iep,
            f_oep: t.f_oep,
            t_decoherence: t.t_decoherence,
            as_printed: false,
        }
    }
}

impl Default for CostParams {
    fn default() -> CostParams {
        CostParams::from_timing(&Timing::default())
    }
}

/// The quantities the cost model reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub n_1q: u64,
    pub n_2q: u64,
    pub n_ms: u64,
    pub n_iep: u64,
    pub n_oep: u64,
    pub latency: f64,
}

/// `-ln C`, accumulated term by term.
pub fn energy(c: &Counts, p: &CostParams) -> f64 {
    let mut e = c.n_1q as f64 * -p.f_1q.ln()
        + c.n_2q as f64 * -p.f_2q.ln()
        + c.n_ms as f64 * -p.f_ms.ln()
        + c.n_iep as f64 * -p.f_iep.ln()
        + c.n_oep as f64 * -p.f_oep.ln();
    let x = c.latency / p.t_decoherence;
    e += if p.as_printed {
        // 1 - e^{-x}; zero latency would give C = 0
        if x == 0.0 {
            f64::INFINITY
        } else {
            -(-(-x).exp_m1()).ln()
        }
    } else {
        x
    };
    e
}

/// Estimated fidelity `C` and its logarithm.
pub fn estimated_fidelity(c: &Counts, p: &CostParams) -> (f64, f64) {
    let log_c = -energy(c, p);
    (log_c.exp(), log_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_one() {
        let (c, l) = estimated_fidelity(&Counts::default(), &CostParams::default());
        assert_eq!((c, l), (1.0, 0.0));
    }

    #[test]
    fn one_cx() {
        let c = Counts { n_2q: 1, ..Counts::default() };
        let (f, _) = estimated_fidelity(&c, &CostParams::default());
        assert!((f - 0.998).abs() < 1e-12);
    }

    #[test]
    fn epr_and_decoherence() {
        let p = CostParams::default();
        let c = Counts { n_iep: 2, n_oep: 1, latency: p.t_decoherence, ..Counts::default() };
        let (f, _) = estimated_fidelity(&c, &p);
        // 0.98^2 * 0.9 / e
        assert!((f - 0.98f64.powi(2) * 0.9 / std::f64::consts::E).abs() < 1e-12, "{f}");
    }

    #[test]
    fn doubling_doubles_energy() {
        let p = CostParams::default();
        let c = Counts { n_1q: 3, n_2q: 7, n_ms: 2, n_iep: 1, n_oep: 4, latency: 123.0 };
        let d = Counts { n_1q: 6, n_2q: 14, n_ms: 4, n_iep: 2, n_oep: 8, latency: 246.0 };
        assert!((2.0 * energy(&c, &p) - energy(&d, &p)).abs() < 1e-12);
    }

    #[test]
    fn printed_form_rewards_latency() {
        let p = CostParams { as_printed: true, ..CostParams::default() };
        let a = Counts { latency: 10.0, ..Counts::default() };
        let b = Counts { latency: 20.0, ..Counts::default() };
        assert!(energy(&b, &p) < energy(&a, &p));
    }
}
