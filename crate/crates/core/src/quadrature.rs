//! Adaptive Gauss–Kronrod integration against the standard normal density,
//! plus the scalar root and extremum finders used by the scalar theory.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae on [-1, 1] (non-negative half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// 7-point Gauss weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Half-width of the integration window for standard-normal expectations.
/// The density at the edge is below 1e-320.
pub const GAUSS_CUTOFF: f64 = 38.5;

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Piece {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Piece {
        lo,
        hi,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Integrate `f` over `[lo, hi]` by globally adaptive G7K15 bisection.
///
/// `breaks` are interior points where the integrand changes quickly; they seed
/// the initial partition. Stops when the summed error estimate falls below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut pieces = Vec::with_capacity(64);
    let mut left = lo;
    for &c in cuts.iter().chain(std::iter::once(&hi)) {
        pieces.push(kronrod(&f, left, c));
        left = c;
    }
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.error).sum();
        if !total.is_finite() {
            return Err(Error::NumericalDivergence("non-finite integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= MAX_INTERVALS {
            return Ok(total);
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("non-empty partition");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        if mid <= p.lo || mid >= p.hi {
            // Interval cannot be split further in floating point.
            return Ok(total);
        }
        pieces.push(kronrod(&f, p.lo, mid));
        pieces.push(kronrod(&f, mid, p.hi));
    }
}

/// `E[g(Z)]` for `Z ~ N(0, 1)`.
pub fn gaussian_expectation<G: Fn(f64) -> f64>(g: G, breaks: &[f64]) -> Result<f64> {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    integrate(
        |z| {
            let w = norm * (-0.5 * z * z).exp();
            if w == 0.0 {
                0.0
            } else {
                w * g(z)
            }
        },
        -GAUSS_CUTOFF,
        GAUSS_CUTOFF,
        breaks,
        1e-15,
        1e-13,
    )
}

/// Bisection for a sign change of `g` on `[lo, hi]`, to absolute width `tol`.
pub fn bisect<G: FnMut(f64) -> Result<f64>>(mut g: G, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut glo = g(lo)?;
    let ghi = g(hi)?;
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    if glo.signum() == ghi.signum() {
        return Err(Error::BracketMiss(format!(
            "no sign change on [{lo}, {hi}] (values {glo:.3e}, {ghi:.3e})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for a minimum of a unimodal `g` on `[lo, hi]`.
pub fn golden_min<G: FnMut(f64) -> Result<f64>>(
    mut g: G,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut g1 = g(x1)?;
    let mut g2 = g(x2)?;
    while hi - lo > tol {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - r * (hi - lo);
            g1 = g(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + r * (hi - lo);
            g2 = g(x2)?;
        }
    }
    Ok(if g1 <= g2 { (x1, g1) } else { (x2, g2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments() {
        let m0 = gaussian_expectation(|_| 1.0, &[]).unwrap();
        let m2 = gaussian_expectation(|z| z * z, &[]).unwrap();
        let m4 = gaussian_expectation(|z| z.powi(4), &[]).unwrap();
        assert!((m0 - 1.0).abs() < 1e-13);
        assert!((m2 - 1.0).abs() < 1e-13);
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lognormal_mean() {
        // E[e^{sZ}] = e^{s^2/2}, including a large spread.
        for s in [0.5f64, 3.0, 8.0] {
            let v = gaussian_expectation(|z| (s * z).exp(), &[s]).unwrap();
            let exact = (0.5 * s * s).exp();
            assert!((v / exact - 1.0).abs() < 1e-11, "s = {s}: {v} vs {exact}");
        }
    }

    #[test]
    fn kinked_integrand() {
        let v = integrate(|x| (x - 0.3f64).abs(), -1.0, 1.0, &[0.3], 1e-15, 1e-14).unwrap();
        assert!((v - (1.3f64 * 1.3 + 0.7 * 0.7) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn root_and_minimum() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(matches!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-9), Err(Error::BracketMiss(_))));
        let (x, v) = golden_min(|x| Ok((x - 0.7) * (x - 0.7) + 2.0), 0.0, 3.0, 1e-10).unwrap();
        // A quadratic minimum only pins x down to about sqrt(eps).
        assert!((x - 0.7).abs() < 1e-7 && (v - 2.0).abs() < 1e-14, "{x} {v}");
    }
}
