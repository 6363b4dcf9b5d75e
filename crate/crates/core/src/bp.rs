//! Synchronous belief propagation on a sampled graph.
//!
//! Messages live on directed edge slots of the graph's CSR layout. One step
//! reads every message of the previous step and writes all new ones, so after
//! `t` steps the field of a vertex depends exactly on its radius-`t` ball:
//!
//! ```text
//! S_i        = sum_{k ~ i} f(m_{k->i})
//! xi_i       = h + S_i
//! m_{i->j}'  = h + S_i - f(m_{j->i})
//! ```
//!
//! Without a correction the uniform mode of this recursion is unstable on
//! finite graphs: a small global excess of field grows by a factor close to
//! `kappa (a - b)` per step and the fields collapse onto the all-out
//! configuration. By default each step therefore adds a common offset to
//! `h`, chosen so the mean posterior membership `mean sigma(xi_i)` equals
//! `kappa`. This is the finite-graph form of the size constraint and can be
//! switched off (on trees it must be, to recover the exact marginals).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::PlantedGraph;
use crate::kernel::{self, sigmoid, KernelParams};
use crate::model::ModelParams;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Every message starts at `log(kappa / (1 - kappa))`.
    Free,
    /// Messages from members start at `+inf`, from non-members at `-inf`.
    /// Uses the ground truth; reported as a proxy for the plus boundary.
    Plus,
}

impl InitMode {
    pub fn label(&self) -> &'static str {
        match self {
            InitMode::Free => "free",
            InitMode::Plus => "plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdRule {
    /// Threshold at `log(kappa / (1 - kappa))`, maximising the success probability.
    MaxPsucc,
    /// Threshold at 0, minimising the expected number of misclassified vertices.
    MinErrors,
}

impl ThresholdRule {
    pub fn threshold(&self, kappa: f64) -> Result<f64> {
        match self {
            ThresholdRule::MaxPsucc => kernel::threshold(kappa),
            ThresholdRule::MinErrors => Ok(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    /// Keep the mean posterior membership at `kappa` by shifting `h` each step.
    pub enforce_membership: bool,
    /// `m <- (1 - damping) m_new + damping m_old`; 0 disables damping.
    pub damping: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig { enforce_membership: true, damping: 0.0 }
    }
}

impl BpConfig {
    pub fn exact() -> Self {
        BpConfig { enforce_membership: false, damping: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct MessageState {
    pub t: usize,
    pub mode: InitMode,
    pub kernel: KernelParams,
    /// One message per directed edge slot of the graph.
    pub messages: Vec<f64>,
    /// Current vertex fields; equal to `h` before the first step.
    pub fields: Vec<f64>,
    /// Offset added to `h` at the last step.
    pub shift: f64,
}

pub fn init(graph: &PlantedGraph, params: &ModelParams, mode: InitMode) -> Result<MessageState> {
    let kernel = params.kernel()?;
    let messages = match mode {
        InitMode::Free => vec![kernel.theta; graph.num_directed()],
        InitMode::Plus => {
            let x = graph.membership();
            graph
                .owner()
                .iter()
                .map(|&v| if x[v as usize] { f64::INFINITY } else { f64::NEG_INFINITY })
                .collect()
        }
    };
    Ok(MessageState {
        t: 0,
        mode,
        kernel,
        messages,
        fields: vec![kernel.h; graph.n()],
        shift: 0.0,
    })
}

/// Offset `d` with `mean sigma(base + d) = kappa`.
fn membership_shift(base: &[f64], kappa: f64) -> Result<f64> {
    let excess = |d: f64| parallel::mean_map(base, |&s| sigmoid(s + d)) - kappa;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut guard = 0;
    while excess(lo) > 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::NumericalDivergence("membership shift out of range".into()));
        }
    }
    while excess(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 120 {
            return Err(Error::NumericalDivergence("membership shift out of range".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-13 {
            break;
        }
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One synchronous update.
pub fn step(state: &mut MessageState, graph: &PlantedGraph, params: &ModelParams, config: &BpConfig) -> Result<()> {
    let kp = state.kernel;
    let fm: Vec<f64> = state.messages.par_iter().map(|&m| kp.f(m)).collect();
    let offsets = graph.offsets();
    let rev = graph.rev();
    let sums: Vec<f64> = (0..graph.n())
        .into_par_iter()
        .map(|v| (offsets[v]..offsets[v + 1]).map(|e| fm[rev[e] as usize]).sum())
        .collect();
    let shift = if config.enforce_membership && graph.n() > 0 {
        let base: Vec<f64> = sums.iter().map(|s| kp.h + s).collect();
        membership_shift(&base, params.kappa)?
    } else {
        0.0
    };
    let h = kp.h + shift;
    let owner = graph.owner();
    let damping = config.damping;
    state
        .messages
        .par_iter_mut()
        .enumerate()
        .for_each(|(e, m)| {
            let new = h + sums[owner[e] as usize] - fm[rev[e] as usize];
            *m = if damping > 0.0 && m.is_finite() {
                (1.0 - damping) * new + damping * *m
            } else {
                new
            };
        });
    state.fields.par_iter_mut().zip(sums.par_iter()).for_each(|(x, s)| *x = h + s);
    if state.fields.iter().any(|x| x.is_nan()) || state.messages.iter().any(|m| m.is_nan()) {
        return Err(Error::NumericalDivergence(format!("NaN in BP at step {}", state.t + 1)));
    }
    state.shift = shift;
    state.t += 1;
    Ok(())
}

/// Run `t` steps from the given initialisation.
pub fn run(
    graph: &PlantedGraph,
    params: &ModelParams,
    mode: InitMode,
    t: usize,
    config: &BpConfig,
) -> Result<MessageState> {
    if !(0.0..1.0).contains(&config.damping) {
        return Err(Error::InvalidParameter(format!("damping must be in [0, 1), got {}", config.damping)));
    }
    let mut state = init(graph, params, mode)?;
    for _ in 0..t {
        step(&mut state, graph, params, config)?;
    }
    Ok(state)
}

pub fn classify(state: &MessageState, kappa: f64, rule: ThresholdRule) -> Result<Vec<bool>> {
    let th = rule.threshold(kappa)?;
    Ok(state.fields.iter().map(|&x| x >= th).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_graph, MembershipMode};
    use crate::model::params_from_snr;

    fn pair(kappa: f64, a: f64, b: f64) -> (PlantedGraph, ModelParams) {
        let g = PlantedGraph::from_edges(vec![true, false], &[(0, 1)], kappa, a, b, 0).unwrap();
        (g, ModelParams::new(None, a, b, kappa).unwrap())
    }

    #[test]
    fn free_init_values() {
        let (g, p) = pair(0.5, 3.0, 1.0);
        let s = init(&g, &p, InitMode::Free).unwrap();
        assert!(s.messages.iter().all(|&m| m == 0.0));
        let (g, p) = pair(0.005, 3.0, 1.0);
        let s = init(&g, &p, InitMode::Free).unwrap();
        assert!(s.messages.iter().all(|&m| (m - (0.005f64 / 0.995).ln()).abs() < 1e-15));
    }

    #[test]
    fn single_edge_unrolls() {
        let (g, p) = pair(0.5, 3.0, 1.0);
        let kp = p.kernel().unwrap();
        let cfg = BpConfig::exact();
        let s1 = run(&g, &p, InitMode::Free, 1, &cfg).unwrap();
        assert!(s1.messages.iter().all(|&m| (m - kp.h).abs() < 1e-15));
        assert!((s1.fields[0] - (kp.h + kp.f(0.0))).abs() < 1e-15);
        let s2 = run(&g, &p, InitMode::Free, 2, &cfg).unwrap();
        let expect = kp.h + kp.f(kp.h);
        assert!((s2.fields[0] - expect).abs() < 1e-15);
        let gamma = p.gamma();
        let exact = (gamma * (1.0 + p.rho() * gamma) / (1.0 + gamma)).ln();
        assert!((s2.fields[0] - exact).abs() < 1e-13);
    }

    #[test]
    fn isolated_vertex_keeps_h() {
        let g = PlantedGraph::from_edges(vec![false, true, false], &[(0, 2)], 0.3, 4.0, 2.0, 0).unwrap();
        let p = ModelParams::new(None, 4.0, 2.0, 0.3).unwrap();
        let s = run(&g, &p, InitMode::Free, 7, &BpConfig::exact()).unwrap();
        assert_eq!(s.fields[1], p.h().unwrap());
    }

    #[test]
    fn plus_on_empty_set() {
        let g = PlantedGraph::from_edges(vec![false; 4], &[(0, 1), (1, 2), (2, 3)], 0.2, 4.0, 2.0, 0).unwrap();
        let p = ModelParams::new(None, 4.0, 2.0, 0.2).unwrap();
        let s0 = init(&g, &p, InitMode::Plus).unwrap();
        assert!(s0.messages.iter().all(|&m| m == f64::NEG_INFINITY));
        let s = run(&g, &p, InitMode::Plus, 1, &BpConfig::exact()).unwrap();
        assert!(s.fields.iter().all(|&x| x == p.h().unwrap()));
    }

    #[test]
    fn zero_signal_fields_are_flat() {
        let p = params_from_snr(0.1, 5.0, 0.0, Some(2000)).unwrap();
        let g = sample_graph(&p, MembershipMode::Bernoulli, 4).unwrap();
        let s = run(&g, &p, InitMode::Free, 5, &BpConfig::exact()).unwrap();
        let h = p.h().unwrap();
        assert!(s.fields.iter().all(|&x| (x - h).abs() < 1e-12));
    }

    #[test]
    fn edge_order_does_not_matter() {
        let p = params_from_snr(0.1, 4.0, 0.9, Some(300)).unwrap();
        let g = sample_graph(&p, MembershipMode::Bernoulli, 8).unwrap();
        let mut edges: Vec<_> = g.edges().map(|(i, j)| (j, i)).collect();
        edges.reverse();
        let g2 = PlantedGraph::from_edges(g.membership().to_vec(), &edges, g.kappa(), g.a(), g.b(), g.seed()).unwrap();
        let s1 = run(&g, &p, InitMode::Free, 6, &BpConfig::default()).unwrap();
        let s2 = run(&g2, &p, InitMode::Free, 6, &BpConfig::default()).unwrap();
        assert_eq!(s1.fields, s2.fields);
    }

    #[test]
    fn rules_coincide_at_half() {
        let (g, p) = pair(0.5, 3.0, 1.0);
        let s = run(&g, &p, InitMode::Free, 3, &BpConfig::default()).unwrap();
        assert_eq!(
            classify(&s, 0.5, ThresholdRule::MaxPsucc).unwrap(),
            classify(&s, 0.5, ThresholdRule::MinErrors).unwrap()
        );
        let mut s = s;
        s.fields.iter_mut().for_each(|x| *x = f64::INFINITY);
        assert!(classify(&s, 0.1, ThresholdRule::MaxPsucc).unwrap().iter().all(|&x| x));
    }

    #[test]
    fn membership_constraint_holds() {
        let p = params_from_snr(0.05, 10.0, 0.6, Some(3000)).unwrap();
        let g = sample_graph(&p, MembershipMode::Bernoulli, 2).unwrap();
        let s = run(&g, &p, InitMode::Free, 8, &BpConfig::default()).unwrap();
        let m = s.fields.iter().map(|&x| sigmoid(x)).sum::<f64>() / g.n() as f64;
        assert!((m - 0.05).abs() < 1e-10);
    }
}
