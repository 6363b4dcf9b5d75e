//! Exact answers for tiny instances: exhaustive search over subsets of a
//! fixed size, marginals by full enumeration, and the exhaustive-search
//! success bound.

use crate::error::{Error, Result};
use crate::graph::PlantedGraph;
use crate::kernel::log_add_exp;
use crate::model::{empirical_psucc, ModelParams};

/// Largest number of subsets exhaustive search will visit.
pub const MAX_SUBSETS: f64 = 1e8;
/// Largest vertex count accepted by the enumeration oracles.
pub const MAX_ENUMERATION: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    pub best_set: Vec<usize>,
    pub best_edge_count: usize,
    /// Number of size-k sets attaining the maximum.
    pub ties: u64,
    /// `|best_set ∩ S|` for the planted set `S`.
    pub overlap: usize,
}

impl ExhaustiveResult {
    /// Empirical success probability of the test "member iff in `best_set`".
    pub fn psucc(&self, graph: &PlantedGraph) -> Result<f64> {
        let mut est = vec![false; graph.n()];
        for &v in &self.best_set {
            est[v] = true;
        }
        empirical_psucc(&est, graph.membership())
    }
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fixed-width bit set over vertices.
#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64).max(1)])
    }
    fn set(&mut self, v: usize) {
        self.0[v / 64] |= 1 << (v % 64);
    }
    fn clear(&mut self, v: usize) {
        self.0[v / 64] &= !(1 << (v % 64));
    }
    fn common(&self, other: &Bits) -> usize {
        self.0.iter().zip(&other.0).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }
}

/// Revolving-door enumeration of the `t`-subsets of `0..n` (Knuth, TAOCP
/// 7.2.1.3, Algorithm R). Consecutive subsets differ by one exchange.
/// `visit` receives the current subset (ascending) and the exchange
/// `(out, in)` that produced it, `None` for the first subset.
fn revolving_door<F: FnMut(&[usize], Option<(usize, usize)>)>(n: usize, t: usize, mut visit: F) {
    debug_assert!(2 <= t && t < n);
    // c[1..=t] hold the subset, c[t+1] = n is a sentinel; c[0] is unused.
    let mut c: Vec<usize> = (0..=t + 1).map(|j| if j == 0 { 0 } else { j - 1 }).collect();
    c[t + 1] = n;
    let mut prev: Vec<usize> = c[1..=t].to_vec();
    visit(&prev, None);
    let odd = t % 2 == 1;
    loop {
        // R3
        let mut j;
        let mut try_decrease;
        if odd {
            if c[1] + 1 < c[2] {
                c[1] += 1;
                emit(&c, t, &mut prev, &mut visit);
                continue;
            }
            j = 2;
            try_decrease = true;
        } else {
            if c[1] > 0 {
                c[1] -= 1;
                emit(&c, t, &mut prev, &mut visit);
                continue;
            }
            j = 2;
            try_decrease = false;
        }
        loop {
            if try_decrease {
                // R4: c[j] = c[j-1] + 1 here.
                if c[j] >= j {
                    c[j] = c[j - 1];
                    c[j - 1] = j - 2;
                    break;
                }
                j += 1;
                try_decrease = false;
            } else {
                // R5: c[j-1] = j - 2 here.
                if c[j] + 1 < c[j + 1] {
                    c[j - 1] = c[j];
                    c[j] += 1;
                    break;
                }
                j += 1;
                if j > t {
                    return;
                }
                try_decrease = true;
            }
        }
        emit(&c, t, &mut prev, &mut visit);
    }
}

fn emit<F: FnMut(&[usize], Option<(usize, usize)>)>(c: &[usize], t: usize, prev: &mut Vec<usize>, visit: &mut F) {
    let mut cur: Vec<usize> = c[1..=t].to_vec();
    cur.sort_unstable();
    let out = prev.iter().copied().find(|v| cur.binary_search(v).is_err());
    let inn = cur.iter().copied().find(|v| prev.binary_search(v).is_err());
    *prev = cur;
    match (out, inn) {
        (Some(o), Some(i)) => visit(prev, Some((o, i))),
        _ => unreachable!("revolving door changes exactly one element"),
    }
}

fn all_subsets<F: FnMut(&[usize], Option<(usize, usize)>)>(n: usize, k: usize, mut visit: F) {
    if k == 0 || k == n {
        let s: Vec<usize> = (0..k).collect();
        visit(&s, None);
    } else if k == 1 {
        visit(&[0], None);
        for v in 1..n {
            visit(&[v], Some((v - 1, v)));
        }
    } else {
        revolving_door(n, k, visit);
    }
}

/// Size-`k` subset with the most internal edges; ties go to the
/// lexicographically smallest set.
pub fn exhaustive_search(graph: &PlantedGraph, k: usize) -> Result<ExhaustiveResult> {
    let n = graph.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("subset size must be in 1..={n}, got {k}")));
    }
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(Error::InstanceTooLarge(format!(
            "C({n}, {k}) = {count:.3e} subsets exceeds {MAX_SUBSETS:.0e}"
        )));
    }
    let adj: Vec<Bits> = (0..n)
        .map(|v| {
            let mut b = Bits::new(n);
            for &w in graph.neighbors(v) {
                b.set(w as usize);
            }
            b
        })
        .collect();
    let mut members = Bits::new(n);
    let mut score = 0usize;
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut ties = 0u64;
    all_subsets(n, k, |set, change| {
        match change {
            None => {
                members = Bits::new(n);
                for &v in set {
                    members.set(v);
                }
                score = set.iter().map(|&v| adj[v].common(&members)).sum::<usize>() / 2;
            }
            Some((out, inn)) => {
                members.clear(out);
                score -= adj[out].common(&members);
                score += adj[inn].common(&members);
                members.set(inn);
            }
        }
        match &mut best {
            Some((b, _)) if score < *b => {}
            Some((b, s)) if score == *b => {
                ties += 1;
                if set < s.as_slice() {
                    s.copy_from_slice(set);
                }
            }
            _ => {
                best = Some((score, set.to_vec()));
                ties = 1;
            }
        }
    });
    let (best_edge_count, best_set) = best.expect("at least one subset");
    let truth = graph.membership();
    let overlap = best_set.iter().filter(|&&v| truth[v]).count();
    Ok(ExhaustiveResult { best_set, best_edge_count, ties, overlap })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop1Bound {
    pub value: f64,
    /// The bound is non-positive and says nothing.
    pub vacuous: bool,
}

fn bound(value: f64) -> Prop1Bound {
    Prop1Bound { value, vacuous: value <= 0.0 }
}

fn check_hypothesis(lambda: f64, kappa: f64) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidFraction(kappa));
    }
    if kappa >= 0.5 {
        return Err(Error::OutsideHypothesis(kappa));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Lower bound `1 - (2e / sqrt(k)) exp(-lambda (1-k) b / (16 k a))` on the
/// asymptotic success probability of exhaustive search.
pub fn prop1_bound(lambda: f64, kappa: f64, a: f64, b: f64) -> Result<Prop1Bound> {
    check_hypothesis(lambda, kappa)?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!("a and b must be positive, got {a}, {b}")));
    }
    let pre = 2.0 * std::f64::consts::E / kappa.sqrt();
    Ok(bound(1.0 - pre * (-lambda * (1.0 - kappa) * b / (16.0 * kappa * a)).exp()))
}

/// The same bound in the limit `b -> inf` at fixed `lambda` (where `b / a -> 1`).
pub fn prop1_bound_dense(lambda: f64, kappa: f64) -> Result<Prop1Bound> {
    check_hypothesis(lambda, kappa)?;
    let pre = 2.0 * std::f64::consts::E / kappa.sqrt();
    Ok(bound(1.0 - pre * (-lambda * (1.0 - kappa) / (16.0 * kappa)).exp()))
}

/// Per-vertex log-odds `log P(x_v = 1) / P(x_v = 0)` under the measure
/// `exp(sum_v x_v lf + sum_{v<w} x_v x_w c_vw)`, by Gray-code enumeration.
/// `coupling(v, w)` gives `c_vw`; it may be `-inf`.
fn enumerate_marginals<C: Fn(usize, usize) -> f64>(n: usize, lf: f64, coupling: C) -> Result<Vec<f64>> {
    if n > MAX_ENUMERATION {
        return Err(Error::EnumerationGuard { n, limit: MAX_ENUMERATION });
    }
    let c: Vec<Vec<f64>> = (0..n).map(|v| (0..n).map(|w| if v == w { 0.0 } else { coupling(v, w) }).collect()).collect();
    // log-weight accumulators for x_v = 1 and x_v = 0.
    let mut on = vec![f64::NEG_INFINITY; n];
    let mut off = vec![f64::NEG_INFINITY; n];
    let mut state = 0u32;
    let mut logw = 0.0f64;
    // Coupling sum into v from the current set, maintained incrementally;
    // -inf entries are tracked separately to avoid inf - inf.
    let mut field = vec![0.0f64; n];
    let mut blocked = vec![0u32; n];
    let mut blocked_weight = 0u32;
    let record = |state: u32, logw: f64, blocked: bool, on: &mut [f64], off: &mut [f64]| {
        if blocked {
            return;
        }
        for v in 0..n {
            if state >> v & 1 == 1 {
                on[v] = log_add_exp(on[v], logw);
            } else {
                off[v] = log_add_exp(off[v], logw);
            }
        }
    };
    record(state, logw, false, &mut on, &mut off);
    for i in 1u64..(1u64 << n) {
        let v = i.trailing_zeros() as usize;
        let adding = state >> v & 1 == 0;
        let delta_finite = lf + field[v];
        if adding {
            logw += delta_finite;
            blocked_weight += blocked[v];
        } else {
            logw -= delta_finite;
            blocked_weight -= blocked[v];
        }
        state ^= 1 << v;
        for w in 0..n {
            if w == v {
                continue;
            }
            let cw = c[v][w];
            if cw == f64::NEG_INFINITY {
                if adding {
                    blocked[w] += 1;
                } else {
                    blocked[w] -= 1;
                }
            } else if adding {
                field[w] += cw;
            } else {
                field[w] -= cw;
            }
        }
        record(state, logw, blocked_weight > 0, &mut on, &mut off);
    }
    Ok(on.iter().zip(&off).map(|(a, b)| a - b).collect())
}

/// Exact log-odds under `p(x) ∝ prod_{edges} rho^{x_i x_j} prod_i gamma^{x_i}`,
/// the model whose tree recursion belief propagation implements.
pub fn exact_local_marginals(graph: &PlantedGraph, params: &ModelParams) -> Result<Vec<f64>> {
    let log_rho = params.rho().ln();
    let h = params.h()?;
    enumerate_marginals(graph.n(), h, |v, w| if graph.has_edge(v, w) { log_rho } else { 0.0 })
}

/// Exact log-odds under the true posterior of the planted model given the
/// graph, including the non-edge factors `((1 - a/n) / (1 - b/n))^{x_i x_j}`.
pub fn exact_posterior_marginals(graph: &PlantedGraph, params: &ModelParams) -> Result<Vec<f64>> {
    let n = graph.n();
    let prior = crate::kernel::threshold(params.kappa)?;
    let nf = params.n.unwrap_or(n) as f64;
    let log_rho = params.rho().ln();
    let log_non = ((1.0 - params.a / nf) / (1.0 - params.b / nf)).ln();
    enumerate_marginals(n, prior, |v, w| if graph.has_edge(v, w) { log_rho } else { log_non })
}
