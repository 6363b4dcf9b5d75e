//! Scalar theory in the limit of large degrees.
//!
//! When `a, b -> inf` at fixed `lambda` the cavity fields become Gaussian,
//! `xi ~ N(theta -/+ mu/2, mu)`, and the recursion collapses to
//! `mu' = lambda F(mu; kappa)` with
//!
//! ```text
//! F(mu; k) = E[(1 - k) / (k + (1 - k) exp(-mu/2 + sqrt(mu) Z))],   Z ~ N(0, 1).
//! ```
//!
//! Fixed points are the solutions of `Lambda(mu) = lambda`, where
//! `Lambda(mu) = mu / F(mu)`. Below the critical `kappa*`, `Lambda` has a
//! local maximum (value `lambda_d`) followed by a local minimum (value
//! `lambda_sp`); between the two the equation has three roots and the free
//! and plus branches differ. The static threshold `lambda_s` is where the
//! free energy `Psi(mu)` of the two branches is equal.

use libm::erf;

use crate::cavity::{Population, PopulationConfig};
use crate::bp::InitMode;
use crate::error::{Error, Result};
use crate::kernel::log_add_exp;
use crate::model::params_from_snr;
use crate::quadrature::{bisect, gaussian_expectation, golden_min};

const SCAN_POINTS: usize = 400;
const ROOT_TOL: f64 = 1e-12;

fn check(mu: f64, kappa: f64) -> Result<()> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidVariance(mu));
    }
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidFraction(kappa));
    }
    Ok(())
}

fn logistic_center(mu: f64, kappa: f64) -> f64 {
    (0.5 * mu + (kappa / (1.0 - kappa)).ln()) / mu.sqrt()
}

/// `F(mu; kappa)`. Exact at `mu = 0` and `kappa = 0`.
pub fn gain(mu: f64, kappa: f64) -> Result<f64> {
    check(mu, kappa)?;
    if mu == 0.0 {
        return Ok(1.0 - kappa);
    }
    if kappa == 0.0 {
        return Ok(mu.exp());
    }
    let r = kappa / (1.0 - kappa);
    let s = mu.sqrt();
    gaussian_expectation(|z| 1.0 / (r + (s * z - 0.5 * mu).exp()), &[logistic_center(mu, kappa), -s])
}

/// `dF/dmu = E[g q^2]` with `g = 1 / (r + e^u)`, `q = e^u / (r + e^u)`, `r = kappa / (1 - kappa)`.
pub fn gain_derivative(mu: f64, kappa: f64) -> Result<f64> {
    check(mu, kappa)?;
    if kappa == 0.0 {
        return Ok(mu.exp());
    }
    let r = kappa / (1.0 - kappa);
    if mu == 0.0 {
        return Ok(1.0 / (r + 1.0).powi(3));
    }
    let s = mu.sqrt();
    gaussian_expectation(
        |z| {
            let u = s * z - 0.5 * mu;
            if u > 0.0 {
                let e = (-u).exp();
                e / (r * e + 1.0).powi(3)
            } else {
                (2.0 * u).exp() / (r + u.exp()).powi(3)
            }
        },
        &[logistic_center(mu, kappa), -s],
    )
}

/// `Lambda(mu) = mu / F(mu)`, the signal-to-noise ratio for which `mu` is a fixed point.
pub fn snr_of_fixed_point(mu: f64, kappa: f64) -> Result<f64> {
    Ok(mu / gain(mu, kappa)?)
}

fn snr_slope(mu: f64, kappa: f64) -> Result<f64> {
    let f = gain(mu, kappa)?;
    Ok((f - mu * gain_derivative(mu, kappa)?) / (f * f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuIteration {
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate `mu <- lambda F(mu)` from `mu0` until successive values differ by
/// less than `tol` or `max_iter` steps were taken.
pub fn mu_iterate(lambda: f64, kappa: f64, mu0: f64, max_iter: usize, tol: f64) -> Result<MuIteration> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut mu = mu0;
    for it in 0..max_iter {
        let next = lambda * gain(mu, kappa)?;
        if !next.is_finite() {
            return Ok(MuIteration { mu: next, iterations: it + 1, converged: false });
        }
        if (next - mu).abs() < tol {
            return Ok(MuIteration { mu: next, iterations: it + 1, converged: true });
        }
        mu = next;
    }
    Ok(MuIteration { mu, iterations: max_iter, converged: false })
}

/// Starting point of the plus branch: the bound `lambda (1 - kappa) / kappa` on `lambda F`.
pub fn plus_start(lambda: f64, kappa: f64) -> f64 {
    lambda * (1.0 - kappa) / kappa
}

/// Free energy of the Gaussian fixed point with parameter `mu`.
pub fn psi_mu(mu: f64, lambda: f64, kappa: f64) -> Result<f64> {
    check(mu, kappa)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return if mu == 0.0 { Ok(0.0) } else { Err(Error::UndefinedRatio(mu)) };
    }
    let quad = kappa * kappa * mu * mu / (4.0 * lambda * (1.0 - kappa));
    let base = lambda * (1.0 - kappa) / 4.0;
    if mu == 0.0 || kappa == 0.0 {
        return Ok(base + quad);
    }
    let (l1, lk) = ((1.0 - kappa).ln(), kappa.ln());
    let s = mu.sqrt();
    let kink = |sign: f64| ((l1 - lk) - sign * 0.5 * mu) / s;
    let inside = gaussian_expectation(|z| log_add_exp(l1, lk + s * z + 0.5 * mu), &[kink(1.0)])?;
    let outside = gaussian_expectation(|z| log_add_exp(l1, lk + s * z - 0.5 * mu), &[kink(-1.0)])?;
    Ok(base + quad - kappa * inside - (1.0 - kappa) * outside)
}

/// Success probability of the Gaussian test, `1 - 2 Phi(-sqrt(mu) / 2)`.
pub fn psucc_largedeg(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidVariance(mu));
    }
    if mu == f64::INFINITY {
        return Ok(1.0);
    }
    Ok(erf(mu.sqrt() / (2.0 * std::f64::consts::SQRT_2)))
}

/// Extrema of `Lambda(mu)`: local maximum `(mu_a, lambda_d)` and local minimum `(mu_b, lambda_sp)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinodals {
    pub mu_a: f64,
    pub lambda_d: f64,
    pub mu_b: f64,
    pub lambda_sp: f64,
}

fn scan_grid(kappa: f64) -> Vec<f64> {
    let hi = 2.0 * ((1.0 - kappa) / kappa).ln().max(0.0) + 60.0;
    let lo = 1e-4f64;
    let r = (hi / lo).ln() / (SCAN_POINTS - 1) as f64;
    (0..SCAN_POINTS).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Most negative slope of `Lambda` and where it occurs.
fn steepest_descent(kappa: f64, grid: &[f64], slopes: &[f64]) -> Result<(f64, f64)> {
    let i = slopes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    golden_min(|m| snr_slope(m, kappa), lo, hi, 1e-10 * hi.max(1.0))
}

fn scan(kappa: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = scan_grid(kappa);
    let slopes = grid.iter().map(|&m| snr_slope(m, kappa)).collect::<Result<Vec<_>>>()?;
    Ok((grid, slopes))
}

/// Minimum over `mu` of `Lambda'(mu)`; negative exactly when the branches can separate.
pub fn min_slope(kappa: f64) -> Result<(f64, f64)> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidFraction(kappa));
    }
    let (grid, slopes) = scan(kappa)?;
    steepest_descent(kappa, &grid, &slopes)
}

pub fn spinodals(kappa: f64) -> Result<Option<Spinodals>> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidFraction(kappa));
    }
    let (grid, slopes) = scan(kappa)?;
    let (mu_min, slope_min) = steepest_descent(kappa, &grid, &slopes)?;
    if slope_min >= 0.0 {
        return Ok(None);
    }
    let left = grid.iter().zip(&slopes).rev().find(|(&m, &s)| m < mu_min && s > 0.0).map(|(&m, _)| m);
    let right = grid.iter().zip(&slopes).find(|(&m, &s)| m > mu_min && s > 0.0).map(|(&m, _)| m);
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::BracketMiss(format!("extrema of Lambda not bracketed for kappa = {kappa}"))),
    };
    let mu_a = bisect(|m| snr_slope(m, kappa), left, mu_min, ROOT_TOL * mu_min.max(1.0))?;
    let mu_b = bisect(|m| snr_slope(m, kappa), mu_min, right, ROOT_TOL * right.max(1.0))?;
    Ok(Some(Spinodals {
        mu_a,
        lambda_d: snr_of_fixed_point(mu_a, kappa)?,
        mu_b,
        lambda_sp: snr_of_fixed_point(mu_b, kappa)?,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuFixedPoints {
    pub kappa: f64,
    pub lambda: f64,
    pub mu_fr: f64,
    pub mu_pl: f64,
    pub coincide: bool,
}

fn solve_root(lambda: f64, kappa: f64, lo: f64, hi: f64) -> Result<f64> {
    bisect(|m| Ok(snr_of_fixed_point(m, kappa)? - lambda), lo, hi, ROOT_TOL * hi.max(1.0))
}

fn fixed_points_with(lambda: f64, kappa: f64, sp: Option<Spinodals>) -> Result<MuFixedPoints> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidFraction(kappa));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(MuFixedPoints { kappa, lambda, mu_fr: 0.0, mu_pl: 0.0, coincide: true });
    }
    let top = plus_start(lambda, kappa) + 1.0;
    let (mu_fr, mu_pl) = match sp {
        None => {
            let mu = solve_root(lambda, kappa, 0.0, top)?;
            (mu, mu)
        }
        Some(s) => {
            let low = (lambda <= s.lambda_d).then(|| solve_root(lambda, kappa, 0.0, s.mu_a)).transpose()?;
            let high = (lambda >= s.lambda_sp)
                .then(|| solve_root(lambda, kappa, s.mu_b, top.max(s.mu_b + 1.0)))
                .transpose()?;
            match (low, high) {
                (Some(l), Some(h)) => (l, h),
                (Some(l), None) => (l, l),
                (None, Some(h)) => (h, h),
                (None, None) => unreachable!("lambda_sp < lambda_d"),
            }
        }
    };
    let coincide = (mu_pl - mu_fr).abs() <= 1e-8 * (1.0 + mu_pl);
    Ok(MuFixedPoints { kappa, lambda, mu_fr, mu_pl, coincide })
}

/// Smallest (free branch) and largest (plus branch) solutions of `mu = lambda F(mu)`.
pub fn fixed_points(lambda: f64, kappa: f64) -> Result<MuFixedPoints> {
    let sp = spinodals(kappa)?;
    fixed_points_with(lambda, kappa, sp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBoundaries {
    pub kappa: f64,
    pub lambda_sp: Option<f64>,
    pub lambda_s: Option<f64>,
    pub lambda_d: Option<f64>,
    /// Free and plus fixed points at `lambda_s`.
    pub mu_fr: Option<f64>,
    pub mu_pl: Option<f64>,
}

impl PhaseBoundaries {
    pub fn exists(&self) -> bool {
        self.lambda_s.is_some()
    }
}

/// `lambda_sp < lambda_s < lambda_d` for the given `kappa`, or all `None`
/// when the branches never separate. `tol` is the tolerance on `lambda_s`;
/// the spinodals are located to near machine precision.
pub fn phase_boundaries(kappa: f64, tol: f64) -> Result<PhaseBoundaries> {
    let none = PhaseBoundaries { kappa, lambda_sp: None, lambda_s: None, lambda_d: None, mu_fr: None, mu_pl: None };
    let Some(sp) = spinodals(kappa)? else {
        return Ok(none);
    };
    let gap = |lambda: f64| -> Result<f64> {
        let fp = fixed_points_with(lambda, kappa, Some(sp))?;
        Ok(psi_mu(fp.mu_fr, lambda, kappa)? - psi_mu(fp.mu_pl, lambda, kappa)?)
    };
    let width = sp.lambda_d - sp.lambda_sp;
    let eps = 1e-9 * width;
    let lambda_s = bisect(gap, sp.lambda_sp + eps, sp.lambda_d - eps, tol.min(width * 1e-3))?;
    let fp = fixed_points_with(lambda_s, kappa, Some(sp))?;
    Ok(PhaseBoundaries {
        kappa,
        lambda_sp: Some(sp.lambda_sp),
        lambda_s: Some(lambda_s),
        lambda_d: Some(sp.lambda_d),
        mu_fr: Some(fp.mu_fr),
        mu_pl: Some(fp.mu_pl),
    })
}

/// [`phase_boundaries`], failing with a bracket miss when a boundary falls
/// outside `[lo, hi]`.
pub fn phase_boundaries_in(kappa: f64, bracket: (f64, f64), tol: f64) -> Result<PhaseBoundaries> {
    let pb = phase_boundaries(kappa, tol)?;
    for (name, v) in [("lambda_sp", pb.lambda_sp), ("lambda_s", pb.lambda_s), ("lambda_d", pb.lambda_d)] {
        if let Some(v) = v {
            if v < bracket.0 || v > bracket.1 {
                return Err(Error::BracketMiss(format!(
                    "{name} = {v} outside [{}, {}] at kappa = {kappa}",
                    bracket.0, bracket.1
                )));
            }
        }
    }
    Ok(pb)
}

/// End point `(kappa*, lambda*)` of the transition line: the largest `kappa`
/// for which `Lambda` is not monotone. Bisection on `kappa` to `tol`.
pub fn critical_point(tol: f64) -> Result<(f64, f64)> {
    let separates = |k: f64| -> Result<f64> { Ok(min_slope(k)?.1) };
    let kappa = bisect(separates, 0.02, 0.08, tol)?;
    let (mu, _) = min_slope(kappa)?;
    Ok((kappa, snr_of_fixed_point(mu, kappa)?))
}

/// Width `lambda_d - lambda_sp` of the coexistence window (0 when absent).
pub fn separation_width(kappa: f64) -> Result<f64> {
    Ok(spinodals(kappa)?.map_or(0.0, |s| s.lambda_d - s.lambda_sp))
}

/// `(mu, Psi(mu) - Psi(0))` on the given grid.
pub fn mu_profile(lambda: f64, kappa: f64, mus: &[f64]) -> Result<Vec<(f64, f64)>> {
    let psi0 = psi_mu(0.0, lambda, kappa)?;
    mus.iter().map(|&m| Ok((m, psi_mu(m, lambda, kappa)? - psi0))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MubarTrace {
    /// `mu_bar(0) = 0, mu_bar(1), ...` up to the last finite value at most `DIVERGENCE`.
    pub values: Vec<f64>,
    /// First step whose value exceeded the cutoff.
    pub diverged_at: Option<usize>,
}

pub const DIVERGENCE: f64 = 1e3;

/// The `kappa -> 0` recursion `mu_bar(t+1) = lambda exp(mu_bar(t))` from 0.
pub fn mubar_recursion(lambda: f64, steps: usize) -> Result<MubarTrace> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    let mut values = vec![0.0f64];
    for t in 1..=steps {
        let next = lambda * values[t - 1].exp();
        if !(next <= DIVERGENCE) {
            return Ok(MubarTrace { values, diverged_at: Some(t) });
        }
        values.push(next);
    }
    Ok(MubarTrace { values, diverged_at: None })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCheckRow {
    pub t: usize,
    pub mu: f64,
    pub mean0: f64,
    pub mean1: f64,
    pub var0: f64,
    pub var1: f64,
    pub predicted_mean0: f64,
    pub predicted_mean1: f64,
    /// Relative deviations (absolute where the prediction is zero).
    pub dev_mean0: f64,
    pub dev_mean1: f64,
    pub dev_var0: f64,
    pub dev_var1: f64,
}

impl GaussianCheckRow {
    pub fn max_deviation(&self) -> f64 {
        self.dev_mean0.max(self.dev_mean1).max(self.dev_var0).max(self.dev_var1)
    }
}

fn rel(x: f64, target: f64) -> f64 {
    if target == 0.0 {
        x.abs()
    } else {
        ((x - target) / target).abs()
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Compare free-initialised population dynamics at finite `b` with the
/// Gaussian limit `N(theta -/+ mu_t / 2, mu_t)`, for `t = 0..=steps`.
pub fn gaussian_limit_check(
    kappa: f64,
    lambda: f64,
    b: f64,
    steps: usize,
    config: &PopulationConfig,
    seed: u64,
) -> Result<Vec<GaussianCheckRow>> {
    let params = params_from_snr(kappa, b, lambda, None)?;
    let theta = params.threshold()?;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut mu = 0.0;
    Population::run(&params, config, InitMode::Free, steps, seed, |pop| {
        if pop.t > 0 {
            mu = lambda * gain(mu, kappa)?;
        }
        let (m0, v0) = mean_var(&pop.xi0);
        let (m1, v1) = mean_var(&pop.xi1);
        let (p0, p1) = (theta - 0.5 * mu, theta + 0.5 * mu);
        rows.push(GaussianCheckRow {
            t: pop.t,
            mu,
            mean0: m0,
            mean1: m1,
            var0: v0,
            var1: v1,
            predicted_mean0: p0,
            predicted_mean1: p1,
            dev_mean0: rel(m0, p0),
            dev_mean1: rel(m1, p1),
            dev_var0: rel(v0, mu),
            dev_var1: rel(v1, mu),
        });
        Ok(())
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gain_reference_values() {
        assert_eq!(gain(0.0, 0.3).unwrap(), 0.7);
        assert!((gain(1.7, 0.0).unwrap() - 1.7f64.exp()).abs() < 1e-12);
        assert!((gain(2.0, 0.05).unwrap() - 3.619_989_752_166_759_3).abs() < 1e-10);
        assert!((gain(40.0, 0.01).unwrap() / 98.044_845_340_230_95 - 1.0).abs() < 1e-10);
        assert!((gain(10.0, 0.005).unwrap() / 93.069_504_335_366_87 - 1.0).abs() < 1e-9);
        assert!((gain(80.0, 0.005).unwrap() / 198.985_565_849_468_8 - 1.0).abs() < 1e-9);
        assert!(matches!(gain(-1.0, 0.1), Err(Error::InvalidVariance(_))));
    }

    #[test]
    fn gain_matches_monte_carlo() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::seed::rng(12);
        let n = 2_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = 0.95 / (0.05 + 0.95 * (-1.0 + 2f64.sqrt() * z).exp());
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((gain(2.0, 0.05).unwrap() - mean).abs() < 4.0 * se);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &(mu, k) in &[(0.5, 0.01), (3.0, 0.05), (12.0, 0.005), (30.0, 0.02)] {
            let h = 1e-4 * mu;
            let fd = (gain(mu + h, k).unwrap() - gain(mu - h, k).unwrap()) / (2.0 * h);
            let an = gain_derivative(mu, k).unwrap();
            assert!((fd / an - 1.0).abs() < 1e-6, "mu {mu} kappa {k}: {fd} vs {an}");
        }
    }

    #[test]
    fn node_refinement_is_stable() {
        // Tightening the partition must not move the value.
        for &(mu, k) in &[(2.0, 0.05), (40.0, 0.01), (80.0, 0.005)] {
            let base = gain(mu, k).unwrap();
            let r = k / (1.0 - k);
            let s = f64::sqrt(mu);
            let breaks: Vec<f64> = (-30..=30).map(|i| i as f64).collect();
            let fine = gaussian_expectation(|z| 1.0 / (r + (s * z - 0.5 * mu).exp()), &breaks).unwrap();
            assert!((base / fine - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn free_branch_small_kappa() {
        let it = mu_iterate(0.2, 1e-6, 0.0, 10_000, 1e-13).unwrap();
        assert!(it.converged);
        assert!((it.mu - 0.259_171_101_819_073_75).abs() < 1e-5);
        let zero = mu_iterate(0.0, 0.1, 0.0, 10, 1e-12).unwrap();
        assert_eq!(zero.mu, 0.0);
        assert!(zero.converged);
    }

    #[test]
    fn two_branches_at_kappa_001() {
        let fp = fixed_points(0.22, 0.01).unwrap();
        assert!(!fp.coincide && fp.mu_pl > fp.mu_fr);
        for mu in [fp.mu_fr, fp.mu_pl] {
            assert!((mu - 0.22 * gain(mu, 0.01).unwrap()).abs() < 1e-9 * (1.0 + mu));
            let h = 1e-4;
            let d = (psi_mu(mu + h, 0.22, 0.01).unwrap() - psi_mu(mu - h, 0.22, 0.01).unwrap()) / (2.0 * h);
            assert!(d.abs() < 1e-6, "dPsi/dmu = {d} at {mu}");
        }
        let it_fr = mu_iterate(0.22, 0.01, 0.0, 100_000, 1e-12).unwrap();
        let it_pl = mu_iterate(0.22, 0.01, plus_start(0.22, 0.01), 100_000, 1e-12).unwrap();
        assert!((it_fr.mu - fp.mu_fr).abs() < 1e-8);
        assert!((it_pl.mu - fp.mu_pl).abs() < 1e-6 * fp.mu_pl);
    }

    #[test]
    fn psi_at_zero_and_errors() {
        assert!((psi_mu(0.0, 0.3, 0.1).unwrap() - 0.3 * 0.9 / 4.0).abs() < 1e-15);
        assert!(matches!(psi_mu(1.0, 0.0, 0.1), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn psucc_values() {
        assert_eq!(psucc_largedeg(0.0).unwrap(), 0.0);
        assert!((psucc_largedeg(4.0).unwrap() - 0.682_689_492_137_085_9).abs() < 1e-12);
        assert!((psucc_largedeg(1e4).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mubar_cases() {
        let tr = mubar_recursion(0.2, 200).unwrap();
        assert!(tr.diverged_at.is_none());
        let last = *tr.values.last().unwrap();
        assert!((last - crate::kernel::x_star(0.2).unwrap().ln()).abs() < 1e-12);
        let tr = mubar_recursion(0.4, 1000).unwrap();
        assert!(tr.diverged_at.is_some());
        let inv_e = (-1.0f64).exp();
        assert!((inv_e * 1f64.exp() - 1.0).abs() < 1e-15);
        let tr = mubar_recursion(inv_e, 5).unwrap();
        assert!(tr.values.windows(2).all(|w| w[1] >= w[0] && w[1] <= 1.0 + 1e-12));
    }

    #[test]
    fn gaussian_check_at_time_zero() {
        let rows = gaussian_limit_check(0.05, 0.4, 100.0, 0, &PopulationConfig { size: 1000, ..Default::default() }, 1)
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].max_deviation() < 1e-12);
    }

    #[test]
    fn no_boundaries_above_critical() {
        let pb = phase_boundaries(0.10, 1e-4).unwrap();
        assert!(!pb.exists() && pb.lambda_sp.is_none() && pb.lambda_d.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gain_monotone(mu in 0.0f64..30.0, dmu in 0.01f64..5.0, k in 0.001f64..0.5, dk in 0.001f64..0.3) {
            let f = gain(mu, k).unwrap();
            prop_assert!(gain(mu + dmu, k).unwrap() >= f);
            prop_assert!(gain(mu, (k + dk).min(0.99)).unwrap() <= f * (1.0 + 1e-12));
        }

        #[test]
        fn psucc_increasing(mu in 0.0f64..50.0, dmu in 0.01f64..5.0) {
            prop_assert!(psucc_largedeg(mu + dmu).unwrap() > psucc_largedeg(mu).unwrap());
        }

        #[test]
        fn free_branch_monotone(lambda in 0.01f64..1.0, k in 0.002f64..0.2) {
            let mut mu = 0.0;
            for _ in 0..30 {
                let next = lambda * gain(mu, k).unwrap();
                prop_assert!(next >= mu - 1e-12);
                mu = next;
            }
        }
    }
}
