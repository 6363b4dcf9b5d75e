use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::bp::InitMode;
use crate::error::{Error, Result};
use crate::kernel::{sigmoid, KernelParams};
use crate::model::ModelParams;
use crate::parallel;
use crate::seed;

/// Samples per independently seeded block of a step.
const CHUNK: usize = 512;

/// Correction applied after every step.
///
/// The raw recursion has an unstable uniform mode: shifting both populations
/// by `c` shifts the next ones by roughly `kappa (a - b) c`, so sampling noise
/// is amplified until the populations run off to `-inf`. The corrections below
/// pin that mode using identities the exact fixed point satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reweighting {
    None,
    /// Common shift of both populations so that the posterior membership
    /// probability averages to `kappa`: `(1-k) E sigma(xi0) + k E sigma(xi1) = k`.
    Membership,
    /// `Membership`, then a shift of `xi0` alone restoring
    /// `E exp(xi0) = kappa / (1 - kappa)`. Once the variance of `xi0` is well
    /// above `log M` the sample moment is carried by tail values the
    /// population never holds, and this shift biases the fields; hence it is
    /// not the default.
    MembershipAndMoment,
}

impl Reweighting {
    pub fn label(&self) -> &'static str {
        match self {
            Reweighting::None => "none",
            Reweighting::Membership => "membership",
            Reweighting::MembershipAndMoment => "membership+moment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationConfig {
    pub size: usize,
    pub reweighting: Reweighting,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig { size: 10_000, reweighting: Reweighting::Membership }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub xi0: Vec<f64>,
    pub xi1: Vec<f64>,
    pub t: usize,
    pub mode: InitMode,
    pub seed: u64,
    /// Shifts applied by the last correction (common, then `xi0` only).
    pub last_shift: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NishimoriReport {
    /// `mean exp(xi0)`; the target is `kappa / (1 - kappa)`.
    pub moment0: f64,
    /// Sample standard deviation of `exp(xi0)`.
    pub moment0_sd: f64,
    /// `(moment0 - target) / (sd / sqrt(M))`; zero when the spread is zero.
    pub moment0_z: f64,
    /// The same statistic before the last moment correction, so it measures
    /// how far one step of the recursion moved away from the identity.
    pub pre_correction_z: f64,
    /// `((1-k)/k)^2 mean exp(2 xi0)`.
    pub x_t: f64,
    pub x_t_se: f64,
    /// Largest gap between the empirical law of `xi1` and the law of `xi0`
    /// tilted by `exp(xi0)`; the two agree at the exact fixed point.
    pub tilt_gap: f64,
}

struct Rates {
    /// Poisson means for (class 0 from xi0, class 0 from xi1, class 1 from xi0, class 1 from xi1).
    mean: [f64; 4],
}

impl Rates {
    fn new(p: &ModelParams) -> Self {
        let k = p.kappa;
        Rates { mean: [(1.0 - k) * p.b, k * p.b, (1.0 - k) * p.b, k * p.a] }
    }
}

fn poisson(mean: f64) -> Result<Option<Poisson<f64>>> {
    if mean == 0.0 {
        return Ok(None);
    }
    Poisson::new(mean)
        .map(Some)
        .map_err(|e| Error::InvalidParameter(format!("Poisson mean {mean}: {e}")))
}

#[inline]
fn draw(d: &Option<Poisson<f64>>, rng: &mut seed::Rng) -> usize {
    match d {
        Some(d) => d.sample(rng) as usize,
        None => 0,
    }
}

/// Sum of `f` over `count` uniform draws from `table`.
#[inline]
fn resampled_sum(table: &[f64], count: usize, rng: &mut seed::Rng) -> f64 {
    let m = table.len();
    let mut s = 0.0;
    for _ in 0..count {
        s += table[rng.random_range(0..m)];
    }
    s
}

fn check_params(params: &ModelParams) -> Result<KernelParams> {
    if !(params.b > 0.0) {
        return Err(Error::InvalidParameter("population dynamics needs b > 0".into()));
    }
    params.kernel()
}

impl Population {
    pub fn init(params: &ModelParams, config: &PopulationConfig, mode: InitMode, seed: u64) -> Result<Self> {
        let kp = check_params(params)?;
        let m = config.size;
        if m == 0 {
            return Err(Error::InvalidParameter("population size must be positive".into()));
        }
        let mut pop = match mode {
            InitMode::Free => Population {
                xi0: vec![kp.theta; m],
                xi1: vec![kp.theta; m],
                t: 0,
                mode,
                seed,
                last_shift: (0.0, 0.0),
            },
            InitMode::Plus => {
                // First step taken analytically: f(+inf) = log rho, f(-inf) = 0.
                let log_rho = kp.rho.ln();
                let rates = Rates::new(params);
                let d0 = poisson(rates.mean[1])?;
                let d1 = poisson(rates.mean[3])?;
                let fill = |class: u64, d: &Option<Poisson<f64>>| -> Vec<f64> {
                    let mut out = vec![0.0; m];
                    out.par_chunks_mut(CHUNK).enumerate().for_each(|(j, chunk)| {
                        let mut rng = seed::rng_for(seed, &[0, class, j as u64]);
                        for x in chunk.iter_mut() {
                            *x = kp.h + draw(d, &mut rng) as f64 * log_rho;
                        }
                    });
                    out
                };
                Population { xi0: fill(0, &d0), xi1: fill(1, &d1), t: 1, mode, seed, last_shift: (0.0, 0.0) }
            }
        };
        pop.correct(params.kappa, kp.theta, config.reweighting)?;
        Ok(pop)
    }

    pub fn size(&self) -> usize {
        self.xi0.len()
    }

    /// One step of the recursion followed by the configured correction.
    pub fn step(&mut self, params: &ModelParams, config: &PopulationConfig) -> Result<()> {
        let kp = check_params(params)?;
        let rates = Rates::new(params);
        let dists = [
            poisson(rates.mean[0])?,
            poisson(rates.mean[1])?,
            poisson(rates.mean[2])?,
            poisson(rates.mean[3])?,
        ];
        let f0: Vec<f64> = self.xi0.par_iter().map(|&x| kp.f(x)).collect();
        let f1: Vec<f64> = self.xi1.par_iter().map(|&x| kp.f(x)).collect();
        let m = config.size;
        let t_next = self.t as u64 + 1;
        let seed = self.seed;
        let build = |class: usize| -> Vec<f64> {
            let (da, db) = (&dists[2 * class], &dists[2 * class + 1]);
            let mut out = vec![0.0; m];
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(j, chunk)| {
                let mut rng = seed::rng_for(seed, &[t_next, class as u64, j as u64]);
                for x in chunk.iter_mut() {
                    let la = draw(da, &mut rng);
                    let lb = draw(db, &mut rng);
                    *x = kp.h + resampled_sum(&f0, la, &mut rng) + resampled_sum(&f1, lb, &mut rng);
                }
            });
            out
        };
        self.xi0 = build(0);
        self.xi1 = build(1);
        self.t += 1;
        if self.xi0.iter().chain(&self.xi1).any(|x| !x.is_finite()) {
            return Err(Error::NumericalDivergence(format!("non-finite cavity field at t = {}", self.t)));
        }
        self.correct(params.kappa, kp.theta, config.reweighting)
    }

    fn correct(&mut self, kappa: f64, theta: f64, rw: Reweighting) -> Result<()> {
        self.last_shift = (0.0, 0.0);
        if rw == Reweighting::None {
            return Ok(());
        }
        // Shifts at rounding level are dropped so exact ties at the threshold survive.
        let tiny = 1e-12 * (1.0 + theta.abs());
        let mut c = membership_shift(&self.xi0, &self.xi1, kappa)?;
        if c.abs() < tiny {
            c = 0.0;
        }
        if c != 0.0 {
            self.xi0.par_iter_mut().chain(self.xi1.par_iter_mut()).for_each(|x| *x += c);
        }
        let mut c0 = 0.0;
        if rw == Reweighting::MembershipAndMoment {
            let top = self.xi0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = parallel::mean_map(&self.xi0, |&x| (x - top).exp());
            c0 = theta - (top + mean.ln());
            if !c0.is_finite() {
                return Err(Error::NumericalDivergence("moment correction is not finite".into()));
            }
            if c0.abs() < tiny {
                c0 = 0.0;
            } else {
                self.xi0.par_iter_mut().for_each(|x| *x += c0);
            }
        }
        self.last_shift = (c, c0);
        Ok(())
    }

    /// `P0(xi < th) + P1(xi >= th) - 1` with its standard error.
    pub fn psucc_at(&self, threshold: f64) -> (f64, f64) {
        let m0 = self.xi0.len() as f64;
        let m1 = self.xi1.len() as f64;
        let p0 = self.xi0.iter().filter(|&&x| x < threshold).count() as f64 / m0;
        let p1 = self.xi1.iter().filter(|&&x| x >= threshold).count() as f64 / m1;
        let se = (p0 * (1.0 - p0) / m0 + p1 * (1.0 - p1) / m1).sqrt();
        (p0 + p1 - 1.0, se)
    }

    /// Success probability of the optimal test, thresholding at `log(kappa / (1 - kappa))`.
    pub fn psucc(&self, kappa: f64) -> Result<(f64, f64)> {
        Ok(self.psucc_at(crate::kernel::threshold(kappa)?))
    }

    pub fn nishimori(&self, kappa: f64) -> Result<NishimoriReport> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidFraction(kappa));
        }
        let m = self.xi0.len() as f64;
        let target = kappa / (1.0 - kappa);
        let moment0 = parallel::mean_map(&self.xi0, |&x| x.exp());
        let var = parallel::sum_map(&self.xi0, |&x| (x.exp() - moment0).powi(2)) / (m - 1.0).max(1.0);
        let sd = var.sqrt();
        let zscore = |tgt: f64| {
            if sd > 0.0 {
                (moment0 - tgt) / (sd / m.sqrt())
            } else if moment0 == tgt {
                0.0
            } else {
                (moment0 - tgt).signum() * f64::INFINITY
            }
        };
        // Undoing the shift c0 on xi0 scales every exp(xi0) by exp(-c0).
        let pre_target = target * self.last_shift.1.exp();
        let scale = 1.0 / (target * target);
        let e2 = parallel::mean_map(&self.xi0, |&x| (2.0 * x).exp());
        let e2_var = parallel::sum_map(&self.xi0, |&x| ((2.0 * x).exp() - e2).powi(2)) / (m - 1.0).max(1.0);
        Ok(NishimoriReport {
            moment0,
            moment0_sd: sd,
            moment0_z: zscore(target),
            pre_correction_z: zscore(pre_target),
            x_t: scale * e2,
            x_t_se: scale * (e2_var / m).sqrt(),
            tilt_gap: tilt_gap(&self.xi0, &self.xi1),
        })
    }

    /// Plain-text snapshot of one class: a header line then one sample per line.
    pub fn write_snapshot<W: Write>(&self, class: u8, mut w: W) -> Result<()> {
        let xs = match class {
            0 => &self.xi0,
            1 => &self.xi1,
            _ => return Err(Error::InvalidParameter(format!("class must be 0 or 1, got {class}"))),
        };
        writeln!(w, "class={class} t={} M={} seed={}", self.t, xs.len(), self.seed)?;
        for x in xs {
            writeln!(w, "{x}")?;
        }
        Ok(())
    }

    /// Read a snapshot written by [`Population::write_snapshot`]. Returns
    /// `(class, t, seed, samples)`.
    pub fn read_snapshot<R: BufRead>(r: R) -> Result<(u8, usize, u64, Vec<f64>)> {
        let mut lines = r.lines();
        let perr = |line: usize, message: String| Error::Parse { line, message };
        let header = lines.next().ok_or_else(|| perr(1, "missing header".into()))??;
        let (mut class, mut t, mut m, mut seed) = (None, None, None, None);
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| perr(1, format!("bad token '{tok}'")))?;
            let e = |s: String| perr(1, format!("{k}: {s}"));
            match k {
                "class" => class = Some(v.parse::<u8>().map_err(|x| e(x.to_string()))?),
                "t" => t = Some(v.parse::<usize>().map_err(|x| e(x.to_string()))?),
                "M" => m = Some(v.parse::<usize>().map_err(|x| e(x.to_string()))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|x| e(x.to_string()))?),
                _ => return Err(perr(1, format!("unknown key '{k}'"))),
            }
        }
        let (class, t, m, seed) = match (class, t, m, seed) {
            (Some(c), Some(t), Some(m), Some(s)) => (c, t, m, s),
            _ => return Err(perr(1, "header needs class, t, M and seed".into())),
        };
        let mut xs = Vec::with_capacity(m);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            xs.push(line.trim().parse::<f64>().map_err(|e| perr(k + 2, e.to_string()))?);
        }
        if xs.len() != m {
            return Err(perr(1, format!("header announces {m} samples, found {}", xs.len())));
        }
        Ok((class, t, seed, xs))
    }

    /// Run `iterations` steps in total (counting the analytic first step of
    /// the plus initialisation), calling `observe` after initialisation and
    /// after every step.
    pub fn run<F: FnMut(&Population) -> Result<()>>(
        params: &ModelParams,
        config: &PopulationConfig,
        mode: InitMode,
        iterations: usize,
        seed: u64,
        mut observe: F,
    ) -> Result<Population> {
        let mut pop = Population::init(params, config, mode, seed)?;
        observe(&pop)?;
        while pop.t < iterations {
            pop.step(params, config)?;
            observe(&pop)?;
        }
        Ok(pop)
    }
}

/// Common shift `c` with `(1-k) mean sigma(xi0+c) + k mean sigma(xi1+c) = k`,
/// by safeguarded Newton iteration.
fn membership_shift(xi0: &[f64], xi1: &[f64], kappa: f64) -> Result<f64> {
    let eval = |c: f64| -> (f64, f64) {
        let s0 = parallel::mean_map(xi0, |&x| sigmoid(x + c));
        let s1 = parallel::mean_map(xi1, |&x| sigmoid(x + c));
        let d0 = parallel::mean_map(xi0, |&x| {
            let s = sigmoid(x + c);
            s * (1.0 - s)
        });
        let d1 = parallel::mean_map(xi1, |&x| {
            let s = sigmoid(x + c);
            s * (1.0 - s)
        });
        ((1.0 - kappa) * s0 + kappa * s1 - kappa, (1.0 - kappa) * d0 + kappa * d1)
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut c = 0.0;
    for _ in 0..200 {
        let (g, dg) = eval(c);
        if g == 0.0 {
            return Ok(c);
        }
        if g > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let mut next = if dg > 0.0 { c - g / dg } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0 + (lo - c).abs().max(1.0),
                (false, true) => hi - 1.0 - (hi - c).abs().max(1.0),
                (false, false) => unreachable!("one side is always set"),
            };
        }
        if (next - c).abs() < 1e-13 * (1.0 + c.abs()) {
            return Ok(next);
        }
        c = next;
        if c.abs() > 1e4 {
            return Err(Error::NumericalDivergence("membership shift diverged".into()));
        }
    }
    Ok(c)
}

/// Kolmogorov distance between the law of `xi1` and the `exp(xi0)`-tilted law of `xi0`.
fn tilt_gap(xi0: &[f64], xi1: &[f64]) -> f64 {
    let top = xi0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut a: Vec<(f64, f64)> = xi0.iter().map(|&x| (x, (x - top).exp())).collect();
    let total: f64 = a.iter().map(|p| p.1).sum();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut b = xi1.to_vec();
    b.sort_by(|p, q| p.total_cmp(q));
    let step = 1.0 / b.len() as f64;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(&q)) => p.0.min(q),
            (Some(p), None) => p.0,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        while i < a.len() && a[i].0 <= x {
            fa += a[i].1 / total;
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            fb += step;
            j += 1;
        }
        gap = gap.max((fa - fb).abs());
    }
    gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params_from_snr;

    fn cfg(rw: Reweighting) -> PopulationConfig {
        PopulationConfig { size: 4000, reweighting: rw }
    }

    #[test]
    fn free_init_is_an_atom() {
        let p = params_from_snr(0.5, 3.0, 1.0, None).unwrap();
        let pop = Population::init(&p, &cfg(Reweighting::MembershipAndMoment), InitMode::Free, 1).unwrap();
        assert!(pop.xi0.iter().chain(&pop.xi1).all(|&x| x == 0.0));
        assert_eq!(pop.psucc(0.5).unwrap().0, 0.0);
        let p = params_from_snr(0.005, 100.0, 0.3, None).unwrap();
        let pop = Population::init(&p, &cfg(Reweighting::MembershipAndMoment), InitMode::Free, 1).unwrap();
        let r = pop.nishimori(0.005).unwrap();
        assert!((r.x_t - 1.0).abs() < 1e-12);
        assert!((r.moment0 - 0.005 / 0.995).abs() < 1e-15);
        assert_eq!(pop.psucc(0.005).unwrap().0, 0.0);
    }

    #[test]
    fn plus_with_unit_ratio_is_constant() {
        let p = params_from_snr(0.1, 10.0, 0.0, None).unwrap();
        let pop = Population::init(&p, &cfg(Reweighting::None), InitMode::Plus, 3).unwrap();
        let h = p.h().unwrap();
        assert!(pop.xi0.iter().chain(&pop.xi1).all(|&x| x == h));
        assert_eq!(pop.t, 1);
    }

    #[test]
    fn plus_first_step_mean() {
        let p = params_from_snr(0.005, 100.0, 0.4, None).unwrap();
        let pop = Population::init(&p, &PopulationConfig { size: 20_000, reweighting: Reweighting::None }, InitMode::Plus, 5)
            .unwrap();
        let lr = p.rho().ln();
        let mean = pop.xi1.iter().sum::<f64>() / pop.size() as f64;
        let expect = p.h().unwrap() + p.kappa * p.a * lr;
        let se = (p.kappa * p.a).sqrt() * lr / (pop.size() as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect} (se {se})");
    }

    #[test]
    fn zero_signal_stays_at_h() {
        let p = params_from_snr(0.05, 20.0, 0.0, None).unwrap();
        let c = cfg(Reweighting::MembershipAndMoment);
        let pop = Population::run(&p, &c, InitMode::Free, 5, 9, |pop| {
            if pop.t >= 1 {
                let r = pop.nishimori(0.05).unwrap();
                assert!((r.moment0 / (0.05 / 0.95) - 1.0).abs() < 1e-12);
            }
            Ok(())
        })
        .unwrap();
        let h = p.h().unwrap();
        assert!(pop.xi0.iter().all(|&x| (x - h).abs() < 1e-9));
        assert_eq!(pop.psucc(0.05).unwrap().0, 0.0);
    }

    #[test]
    fn single_step_law_is_scaled_poisson() {
        let (kappa, a, b) = (0.5, 2.0, 1.0);
        let p = ModelParams::new(None, a, b, kappa).unwrap();
        let c = PopulationConfig { size: 50_000, reweighting: Reweighting::None };
        let mut pop = Population::init(&p, &c, InitMode::Free, 11).unwrap();
        pop.step(&p, &c).unwrap();
        let kp = p.kernel().unwrap();
        let unit = kp.f(0.0);
        // xi0 = h + L f(0) with L ~ Poisson((1-k) b + k b) = Poisson(1).
        let mut counts = [0usize; 6];
        for &x in &pop.xi0 {
            let l = ((x - kp.h) / unit).round();
            assert!((x - kp.h - l * unit).abs() < 1e-12);
            if (l as usize) < 6 {
                counts[l as usize] += 1;
            }
        }
        let mut pmf = (-1.0f64).exp();
        for (l, &cnt) in counts.iter().enumerate() {
            if l > 0 {
                pmf /= l as f64;
            }
            let n = pop.size() as f64;
            let sd = (n * pmf * (1.0 - pmf)).sqrt();
            assert!((cnt as f64 - n * pmf).abs() < 4.0 * sd + 1.0, "L = {l}");
        }
    }

    #[test]
    fn membership_correction_holds_exactly() {
        let p = params_from_snr(0.05, 30.0, 0.7, None).unwrap();
        let c = cfg(Reweighting::Membership);
        let pop = Population::run(&p, &c, InitMode::Plus, 6, 2, |_| Ok(())).unwrap();
        let s0 = pop.xi0.iter().map(|&x| sigmoid(x)).sum::<f64>() / pop.size() as f64;
        let s1 = pop.xi1.iter().map(|&x| sigmoid(x)).sum::<f64>() / pop.size() as f64;
        assert!((0.95 * s0 + 0.05 * s1 - 0.05).abs() < 1e-10);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params_from_snr(0.05, 30.0, 0.7, None).unwrap();
        let c = cfg(Reweighting::MembershipAndMoment);
        let a = Population::run(&p, &c, InitMode::Free, 4, 77, |_| Ok(())).unwrap();
        let b = Population::run(&p, &c, InitMode::Free, 4, 77, |_| Ok(())).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c3 = pool.install(|| Population::run(&p, &c, InitMode::Free, 4, 77, |_| Ok(())).unwrap());
        assert_eq!(a, c3);
    }

    #[test]
    fn snapshot_round_trip() {
        let p = params_from_snr(0.05, 30.0, 0.7, None).unwrap();
        let pop = Population::run(&p, &cfg(Reweighting::MembershipAndMoment), InitMode::Plus, 3, 4, |_| Ok(())).unwrap();
        let mut buf = Vec::new();
        pop.write_snapshot(1, &mut buf).unwrap();
        let (class, t, seed, xs) = Population::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!((class, t, seed), (1, 3, 4));
        assert_eq!(xs, pop.xi1);
    }

    #[test]
    fn tilt_gap_is_zero_for_consistent_laws() {
        // xi0 uniform on {-1, 1}; tilting gives weights e^-1, e^1.
        let xi0 = vec![-1.0, 1.0];
        let w = 1.0f64.exp() / (1.0f64.exp() + (-1.0f64).exp());
        let n1 = 100_000usize;
        let ones = (w * n1 as f64).round() as usize;
        let mut xi1 = vec![1.0; ones];
        xi1.extend(std::iter::repeat_n(-1.0, n1 - ones));
        assert!(tilt_gap(&xi0, &xi1) < 1e-5);
        assert!(tilt_gap(&xi0, &[-1.0]) > 0.8);
    }
}
