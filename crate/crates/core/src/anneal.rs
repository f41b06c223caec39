//! Simulated annealing with geometric cooling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    /// Iterations per phase.
    pub iters: usize,
    /// Cooling factor per iteration.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for AnnealParams {
    fn default() -> AnnealParams {
        AnnealParams { iters: 200, alpha: 0.95, seed: 0 }
    }
}

/// Metropolis rule: always take improvements, take a worse candidate with
/// probability `exp(-delta / temp)`. `u` is uniform in [0, 1).
pub fn metropolis_accept(delta: f64, temp: f64, u: f64) -> bool {
    if delta <= 0.0 {
        return true;
    }
    if !delta.is_finite() || temp <= 0.0 {
        return false;
    }
    u < (-delta / temp).exp()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Energy of the current state after each iteration.
    pub current: Vec<f64>,
    /// Best energy seen so far after each iteration.
    pub best: Vec<f64>,
    /// Whether each iteration's candidate was taken.
    pub took: Vec<bool>,
    pub accepted: usize,
}

impl Trace {
    /// Run log with one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,energy,best,accepted\n");
        for (i, ((e, b), t)) in self.current.iter().zip(&self.best).zip(&self.took).enumerate() {
            out.push_str(&format!("{i},{e},{b},{t}\n"));
        }
        out
    }
}

/// One annealing phase. `neighbor` gets a fresh seed per call; infeasible
/// candidates should report an infinite energy.
pub fn anneal<S: Clone>(
    init: S,
    e0: f64,
    t0: f64,
    p: &AnnealParams,
    rng: &mut ChaCha8Rng,
    mut neighbor: impl FnMut(&S, u64) -> S,
    mut energy: impl FnMut(&S) -> f64,
    trace: &mut Trace,
) -> (S, f64) {
    let mut cur = init.clone();
    let mut e_cur = e0;
    let mut best = (init, e0);
    let mut temp = if t0 > 0.0 && t0.is_finite() { t0 } else { 1.0 };
    for _ in 0..p.iters {
        let cand = neighbor(&cur, rng.gen());
        let e = energy(&cand);
        let take = metropolis_accept(e - e_cur, temp, rng.gen());
        trace.took.push(take);
        if take {
            cur = cand;
            e_cur = e;
            trace.accepted += 1;
            if e < best.1 {
                best = (cur.clone(), e);
            }
        }
        trace.current.push(e_cur);
        trace.best.push(best.1);
        temp *= p.alpha;
    }
    best
}

/// Two phases over a pair state: first perturb `a`, then `b` with the best
/// `a` fixed. The starting temperature is the initial energy.
pub fn anneal_two_phase<A: Clone, B: Clone>(
    a: A,
    b: B,
    p: &AnnealParams,
    mut neighbor_a: impl FnMut(&A, &B, u64) -> A,
    mut neighbor_b: impl FnMut(&A, &B, u64) -> B,
    mut energy: impl FnMut(&A, &B) -> f64,
) -> (A, B, f64, Trace) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut trace = Trace::default();
    let e0 = energy(&a, &b);
    let t0 = e0;
    let (a, e1) = {
        let b = b.clone();
        anneal(a, e0, t0, p, &mut rng, |x, s| neighbor_a(x, &b, s), |x| energy(x, &b), &mut trace)
    };
    let (b, e2) = {
        let a = a.clone();
        anneal(b, e1, t0, p, &mut rng, |x, s| neighbor_b(&a, x, s), |x| energy(&a, x), &mut trace)
    };
    (a, b, e2, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvements_always_accepted() {
        assert!(metropolis_accept(-1.0, 0.0, 0.999));
        assert!(metropolis_accept(0.0, 1.0, 0.999));
        assert!(!metropolis_accept(f64::INFINITY, 1e9, 0.0));
    }

    #[test]
    fn best_so_far_never_rises() {
        let p = AnnealParams { iters: 300, alpha: 0.97, seed: 5 };
        let (x, y, e, t) = anneal_two_phase(
            40i64,
            -30i64,
            &p,
            |a, _, s| a + if s % 2 == 0 { 1 } else { -1 },
            |_, b, s| b + if s % 2 == 0 { 1 } else { -1 },
            |a, b| ((a - 3) * (a - 3) + (b + 2) * (b + 2)) as f64,
        );
        assert!(t.best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(e, ((x - 3) * (x - 3) + (y + 2) * (y + 2)) as f64);
        assert!(e < (37 * 37 + 28 * 28) as f64);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 601);
        assert_eq!(t.took.iter().filter(|&&x| x).count(), t.accepted);
    }
}
