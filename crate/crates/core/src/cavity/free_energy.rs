//! Bethe free energy of a population, by stratified Monte Carlo.
//!
//! ```text
//! Psi   = Psi_e - Psi_v + Psi_0
//! Psi_e = 1/2 sum_{x, y} w_xy E log(1 + (rho - 1) sigma(xi_x) sigma(xi'_y))
//! Psi_v = sum_c P(c) E log(1 - k + k exp(-k (a - b)) exp(S_c))
//! Psi_0 = k^2 / 2 (a log(a / b) - 2a + 2b)
//! ```
//!
//! with pair weights `w = ((1-k)^2 b, k(1-k) b, k(1-k) b, k^2 a)` and
//! `S_c = sum_{L0} f(xi0) + sum_{L1} f(xi1)`, where `L0 ~ Poisson((1-k) b)` and
//! `L1 ~ Poisson(k a)` for members (probability `k`) or `Poisson(k b)` for
//! non-members. Each of the six expectations is estimated from its own
//! independent draws, which keeps the variance of the difference small.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{log_add_exp, sigmoid};
use crate::model::ModelParams;
use crate::seed;

use super::population::Population;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    pub psi: f64,
    pub se: f64,
}

/// Mean and variance-of-the-mean of `draw` over `rounds` samples, in fixed
/// seeded chunks.
fn estimate<F: Fn(&mut seed::Rng) -> f64 + Sync>(rounds: usize, master: u64, stratum: u64, draw: F) -> (f64, f64) {
    let chunks = rounds.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed::rng_for(master, &[stratum, j as u64]);
            let len = CHUNK.min(rounds - j * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let v = draw(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = rounds as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    (mean, var / n)
}

pub fn bethe_free_energy(pop: &Population, params: &ModelParams, rounds: usize, seed: u64) -> Result<FreeEnergy> {
    if rounds < 2 {
        return Err(Error::InvalidParameter("need at least two Monte Carlo rounds".into()));
    }
    let kp = params.kernel()?;
    let (k, a, b) = (params.kappa, params.a, params.b);
    let m = pop.size();
    let sig = [
        pop.xi0.par_iter().map(|&x| sigmoid(x)).collect::<Vec<f64>>(),
        pop.xi1.par_iter().map(|&x| sigmoid(x)).collect::<Vec<f64>>(),
    ];
    let f0: Vec<f64> = pop.xi0.par_iter().map(|&x| kp.f(x)).collect();
    let f1: Vec<f64> = pop.xi1.par_iter().map(|&x| kp.f(x)).collect();
    let rm1 = kp.rho - 1.0;

    let mut psi = 0.0;
    let mut var = 0.0;
    let weights = [
        ((0, 0), (1.0 - k) * (1.0 - k) * b),
        ((0, 1), k * (1.0 - k) * b),
        ((1, 0), k * (1.0 - k) * b),
        ((1, 1), k * k * a),
    ];
    for (s, &((x, y), w)) in weights.iter().enumerate() {
        let (sx, sy) = (&sig[x], &sig[y]);
        let (mean, v) = estimate(rounds, seed, s as u64, |rng| {
            let p = sx[rng.random_range(0..m)] * sy[rng.random_range(0..m)];
            (rm1 * p).ln_1p()
        });
        psi += 0.5 * w * mean;
        var += (0.5 * w).powi(2) * v;
    }

    let poisson = |mean: f64| -> Result<Option<Poisson<f64>>> {
        if mean == 0.0 {
            Ok(None)
        } else {
            Poisson::new(mean).map(Some).map_err(|e| Error::InvalidParameter(e.to_string()))
        }
    };
    let d0 = poisson((1.0 - k) * b)?;
    let log_1mk = (1.0 - k).ln();
    let offset = k.ln() - k * (a - b);
    for (s, (prob, mean1)) in [(k, k * a), (1.0 - k, k * b)].into_iter().enumerate() {
        let d1 = poisson(mean1)?;
        let (mean, v) = estimate(rounds, seed, 4 + s as u64, |rng| {
            let l0 = d0.as_ref().map_or(0, |d| d.sample(rng) as usize);
            let l1 = d1.as_ref().map_or(0, |d| d.sample(rng) as usize);
            let mut sum = 0.0;
            for _ in 0..l0 {
                sum += f0[rng.random_range(0..m)];
            }
            for _ in 0..l1 {
                sum += f1[rng.random_range(0..m)];
            }
            log_add_exp(log_1mk, offset + sum)
        });
        psi -= prob * mean;
        var += prob * prob * v;
    }

    psi += 0.5 * k * k * (a * (a / b).ln() - 2.0 * a + 2.0 * b);
    Ok(FreeEnergy { psi, se: var.sqrt() })
}
