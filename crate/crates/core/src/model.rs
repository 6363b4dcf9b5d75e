//! Problem parameters and the success-probability metric.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams};

/// Parameters of the planted dense subset model.
///
/// Pairs inside the hidden set are connected with probability `a / n`, all
/// other pairs with probability `b / n`; each vertex is a member with
/// probability `kappa`. `n` is only needed for finite-graph work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: Option<usize>,
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
}

impl ModelParams {
    pub fn new(n: Option<usize>, a: f64, b: f64, kappa: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite() && a.is_finite() && a >= b) {
            return Err(Error::InvalidParameter(format!(
                "need a >= b >= 0, got a = {a}, b = {b}"
            )));
        }
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidFraction(kappa));
        }
        if let Some(n) = n {
            if n == 0 {
                return Err(Error::InvalidParameter("n must be positive".into()));
            }
            if a / n as f64 > 1.0 {
                return Err(Error::SupercriticalEdgeProbability(a / n as f64));
            }
        }
        Ok(ModelParams { n, a, b, kappa })
    }

    /// Signal-to-noise ratio `kappa^2 (a - b)^2 / ((1 - kappa) b)`.
    pub fn snr(&self) -> f64 {
        let d = self.a - self.b;
        self.kappa * self.kappa * d * d / ((1.0 - self.kappa) * self.b)
    }

    pub fn rho(&self) -> f64 {
        self.a / self.b
    }

    /// `gamma = exp(-kappa (a - b)) kappa / (1 - kappa)`, the per-vertex prior weight.
    pub fn gamma(&self) -> f64 {
        (-self.kappa * (self.a - self.b)).exp() * self.kappa / (1.0 - self.kappa)
    }

    pub fn h(&self) -> Result<f64> {
        kernel::field_h(self.a, self.b, self.kappa)
    }

    pub fn deg_out(&self) -> f64 {
        self.b
    }

    pub fn deg_in(&self) -> f64 {
        self.kappa * self.a + (1.0 - self.kappa) * self.b
    }

    pub fn kernel(&self) -> Result<KernelParams> {
        KernelParams::new(self.a, self.b, self.kappa)
    }

    pub fn threshold(&self) -> Result<f64> {
        kernel::threshold(self.kappa)
    }
}

/// Parameters with the given signal-to-noise ratio, taking the root `a >= b`.
pub fn params_from_snr(kappa: f64, b: f64, lambda: f64, n: Option<usize>) -> Result<ModelParams> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidFraction(kappa));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("b must be positive, got {b}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let a = b + (lambda * (1.0 - kappa) * b).sqrt() / kappa;
    ModelParams::new(n, a, b, kappa)
}

/// `P(T = 1 | member) + P(T = 0 | non-member) - 1` from within-class fractions.
pub fn empirical_psucc(estimate: &[bool], truth: &[bool]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "estimate has length {} but truth has length {}",
            estimate.len(),
            truth.len()
        )));
    }
    let (mut members, mut hits, mut rejects) = (0usize, 0usize, 0usize);
    for (&e, &x) in estimate.iter().zip(truth) {
        if x {
            members += 1;
            hits += e as usize;
        } else {
            rejects += !e as usize;
        }
    }
    let others = truth.len() - members;
    if members == 0 {
        return Err(Error::DegenerateGroundTruth("no members"));
    }
    if others == 0 {
        return Err(Error::DegenerateGroundTruth("no non-members"));
    }
    Ok(hits as f64 / members as f64 + rejects as f64 / others as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_signal() {
        let p = params_from_snr(0.2, 7.0, 0.0, None).unwrap();
        assert_eq!(p.a, p.b);
        assert_eq!(p.snr(), 0.0);
    }

    #[test]
    fn inversion_example() {
        let p = params_from_snr(0.005, 100.0, 0.3, None).unwrap();
        let a = 100.0 + (0.3f64 * 0.995 * 100.0).sqrt() / 0.005;
        assert!((p.a - a).abs() < 1e-12 * a);
        assert!((p.snr() - 0.3).abs() < 1e-12);
        let q = params_from_snr(0.5, 4.0, 2.0, None).unwrap();
        let gap = q.deg_in() - q.deg_out();
        assert!((gap - q.kappa * (q.a - q.b)).abs() < 1e-12);
        assert!((gap - (2.0f64 * 0.5 * 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn supercritical_rejected() {
        let err = params_from_snr(0.005, 100.0, 0.3, Some(1000)).unwrap_err();
        assert!(matches!(err, Error::SupercriticalEdgeProbability(_)));
    }

    #[test]
    fn psucc_corners() {
        let truth = [true, false, false, true, false];
        assert_eq!(empirical_psucc(&truth, &truth).unwrap(), 1.0);
        assert_eq!(empirical_psucc(&[false; 5], &truth).unwrap(), 0.0);
        assert_eq!(empirical_psucc(&[true; 5], &truth).unwrap(), 0.0);
        let flip: Vec<bool> = truth.iter().map(|x| !x).collect();
        assert_eq!(empirical_psucc(&flip, &truth).unwrap(), -1.0);
        assert!(matches!(
            empirical_psucc(&[true; 3], &[false; 3]),
            Err(Error::DegenerateGroundTruth(_))
        ));
    }

    #[test]
    fn derived_quantities() {
        let p = ModelParams::new(None, 6.0, 2.0, 0.25).unwrap();
        assert_eq!(p.rho(), 3.0);
        assert!((p.gamma().ln() - p.h().unwrap()).abs() < 1e-14);
        assert_eq!(p.deg_in(), 0.25 * 6.0 + 0.75 * 2.0);
    }

    proptest! {
        #[test]
        fn snr_round_trip(kappa in 0.001f64..0.9, b in 0.1f64..50.0, lambda in 0.1f64..20.0) {
            let p = params_from_snr(kappa, b, lambda, None).unwrap();
            prop_assert!(p.a >= p.b);
            prop_assert!((p.snr() - lambda).abs() <= 1e-12 * lambda);
        }

        #[test]
        fn psucc_permutation_invariant(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 2..60), seed in any::<u64>()) {
            let mut truth: Vec<bool> = bits.iter().map(|b| b.0).collect();
            truth[0] = true;
            truth[1] = false;
            let est: Vec<bool> = bits.iter().map(|b| b.1).collect();
            let base = empirical_psucc(&est, &truth).unwrap();
            let mut idx: Vec<usize> = (0..truth.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = crate::seed::mix64(s);
                idx.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let t2: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
            let e2: Vec<bool> = idx.iter().map(|&i| est[i]).collect();
            prop_assert!((empirical_psucc(&e2, &t2).unwrap() - base).abs() < 1e-12);
        }
    }
}
