//! Success probability and free energy across a grid of signal-to-noise ratios.

use rayon::prelude::*;

use crate::bp::{InitMode, ThresholdRule};
use crate::error::{Error, Result};
use crate::model::params_from_snr;
use crate::seed;

use super::free_energy::bethe_free_energy;
use super::population::{Population, PopulationConfig, Reweighting};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub kappa: f64,
    pub b: f64,
    pub size: usize,
    pub iterations: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub psi_rounds: usize,
    pub reweighting: Reweighting,
    pub rule: ThresholdRule,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            kappa: 0.005,
            b: 100.0,
            size: 10_000,
            iterations: 300,
            seeds: 10,
            master_seed: 1,
            psi_rounds: 200_000,
            reweighting: Reweighting::Membership,
            rule: ThresholdRule::MaxPsucc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityCurvePoint {
    pub lambda: f64,
    pub psucc_fr: f64,
    pub psucc_fr_se: f64,
    pub psucc_pl: f64,
    pub psucc_pl_se: f64,
    pub psi_fr: f64,
    pub psi_fr_se: f64,
    pub psi_pl: f64,
    pub psi_pl_se: f64,
    /// Set on the first point past the free-energy crossing.
    pub lambda_s_flag: bool,
    /// Largest |z-score| of `mean exp(xi0)` against `kappa / (1 - kappa)`
    /// before any moment correction, over all runs and iterations `t >= 1`.
    pub nishimori_max_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityCurve {
    pub points: Vec<CavityCurvePoint>,
    pub lambda_s: Option<f64>,
}

pub const CSV_HEADER: &str = "lambda,psucc_fr,psucc_fr_se,psucc_pl,psucc_pl_se,psi_fr,psi_fr_se,psi_pl,psi_pl_se";

impl CavityCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.lambda,
                p.psucc_fr,
                p.psucc_fr_se,
                p.psucc_pl,
                p.psucc_pl_se,
                p.psi_fr,
                p.psi_fr_se,
                p.psi_pl,
                p.psi_pl_se
            ));
        }
        out
    }
}

struct RunSummary {
    psucc: (f64, f64),
    psi: (f64, f64),
    max_z: f64,
}

fn combine(xs: &[(f64, f64)]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|p| p.0).sum::<f64>() / n;
    if xs.len() == 1 {
        return xs[0];
    }
    let var = xs.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Across-seed spread, but never below the pooled within-run error.
    let within = (xs.iter().map(|p| p.1 * p.1).sum::<f64>()).sqrt() / n;
    (mean, (var / n).sqrt().max(within))
}

/// Whether the two initialisations reached different fixed points.
fn separated(p: &CavityCurvePoint) -> bool {
    let se = (p.psucc_fr_se.powi(2) + p.psucc_pl_se.powi(2)).sqrt();
    p.psucc_pl - p.psucc_fr > (4.0 * se).max(0.02)
}

/// Free-energy crossing: the first point where the two fixed points differ
/// and the plus one has the lower free energy. Interpolates linearly against a
/// separated predecessor, otherwise takes the midpoint with the predecessor.
fn locate_crossing(points: &mut [CavityCurvePoint]) -> Option<f64> {
    let i = points.iter().position(|p| separated(p) && p.psi_fr > p.psi_pl)?;
    points[i].lambda_s_flag = true;
    if i == 0 {
        return Some(points[0].lambda);
    }
    let (prev, cur) = (points[i - 1], points[i]);
    if separated(&prev) {
        let d0 = prev.psi_fr - prev.psi_pl;
        let d1 = cur.psi_fr - cur.psi_pl;
        let w = d0 / (d0 - d1);
        Some(prev.lambda + w * (cur.lambda - prev.lambda))
    } else {
        Some(0.5 * (prev.lambda + cur.lambda))
    }
}

pub fn pd_curve(grid: &[f64], config: &CurveConfig) -> Result<CavityCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if config.seeds == 0 {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(|a, b| a.total_cmp(b));
    let pc = PopulationConfig { size: config.size, reweighting: config.reweighting };
    let modes = [InitMode::Free, InitMode::Plus];
    let tasks: Vec<(usize, usize, usize)> = (0..lambdas.len())
        .flat_map(|i| (0..2).flat_map(move |m| (0..config.seeds).map(move |s| (i, m, s))))
        .collect();
    let runs: Vec<RunSummary> = tasks
        .par_iter()
        .map(|&(i, mi, s)| {
            let params = params_from_snr(config.kappa, config.b, lambdas[i], None)?;
            let run_seed = seed::derive(config.master_seed, &[i as u64, mi as u64, s as u64]);
            let mut max_z: f64 = 0.0;
            let pop = Population::run(&params, &pc, modes[mi], config.iterations, run_seed, |p| {
                if p.t >= 1 {
                    max_z = max_z.max(p.nishimori(config.kappa)?.pre_correction_z.abs());
                }
                Ok(())
            })?;
            let th = config.rule.threshold(config.kappa)?;
            let psucc = pop.psucc_at(th);
            let fe = bethe_free_energy(&pop, &params, config.psi_rounds, seed::derive(run_seed, &[0x0070_7369]))?;
            Ok(RunSummary { psucc, psi: (fe.psi, fe.se), max_z })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        let pick = |mi: usize| -> Vec<&RunSummary> {
            tasks.iter().zip(&runs).filter(|(t, _)| t.0 == i && t.1 == mi).map(|(_, r)| r).collect()
        };
        let fr = pick(0);
        let pl = pick(1);
        let ps_fr = combine(&fr.iter().map(|r| r.psucc).collect::<Vec<_>>());
        let ps_pl = combine(&pl.iter().map(|r| r.psucc).collect::<Vec<_>>());
        let psi_fr = combine(&fr.iter().map(|r| r.psi).collect::<Vec<_>>());
        let psi_pl = combine(&pl.iter().map(|r| r.psi).collect::<Vec<_>>());
        let max_z = fr.iter().chain(&pl).map(|r| r.max_z).fold(0.0, f64::max);
        points.push(CavityCurvePoint {
            lambda,
            psucc_fr: ps_fr.0,
            psucc_fr_se: ps_fr.1,
            psucc_pl: ps_pl.0,
            psucc_pl_se: ps_pl.1,
            psi_fr: psi_fr.0,
            psi_fr_se: psi_fr.1,
            psi_pl: psi_pl.0,
            psi_pl_se: psi_pl.1,
            lambda_s_flag: false,
            nishimori_max_z: max_z,
        });
    }
    let lambda_s = locate_crossing(&mut points);
    Ok(CavityCurve { points, lambda_s })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(lambda: f64, fr: f64, pl: f64, psi_fr: f64, psi_pl: f64) -> CavityCurvePoint {
        CavityCurvePoint {
            lambda,
            psucc_fr: fr,
            psucc_fr_se: 0.001,
            psucc_pl: pl,
            psucc_pl_se: 0.001,
            psi_fr,
            psi_fr_se: 1e-4,
            psi_pl,
            psi_pl_se: 1e-4,
            lambda_s_flag: false,
            nishimori_max_z: 0.0,
        }
    }

    #[test]
    fn crossing_interpolation() {
        let mut pts = vec![
            point(0.1, 0.1, 0.1, 0.001, 0.001),
            point(0.2, 0.2, 0.6, 0.002, 0.004),
            point(0.3, 0.3, 0.9, 0.004, 0.002),
            point(0.4, 0.95, 0.95, 0.03, 0.03),
        ];
        let ls = locate_crossing(&mut pts).unwrap();
        assert!((ls - 0.25).abs() < 1e-12);
        assert!(pts[2].lambda_s_flag && !pts[1].lambda_s_flag);
        let mut pts = vec![point(0.1, 0.1, 0.1, 0.0, 0.0), point(0.3, 0.2, 0.8, 0.01, 0.005)];
        assert!((locate_crossing(&mut pts).unwrap() - 0.2).abs() < 1e-12);
        let mut pts = vec![point(0.1, 0.1, 0.1, 0.0, 0.0)];
        assert!(locate_crossing(&mut pts).is_none());
    }

    #[test]
    fn zero_signal_point() {
        let cfg = CurveConfig { size: 2000, iterations: 5, seeds: 2, psi_rounds: 2000, ..CurveConfig::default() };
        let c = pd_curve(&[0.0], &cfg).unwrap();
        let p = c.points[0];
        assert!(p.psucc_fr.abs() < 1e-12 && p.psucc_pl.abs() < 1e-12);
        assert!(c.lambda_s.is_none());
        assert!(c.to_csv().starts_with(CSV_HEADER));
    }
}
