//! The named experiments. [`plan`] resolves and validates a config without
//! doing any work; [`execute`] runs the plan and renders its data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use rayon::prelude::*;

use hclab_core::bp::{self, BpConfig, InitMode, ThresholdRule};
use hclab_core::cavity::{bethe_free_energy, pd_curve, CurveConfig, Population, PopulationConfig, Reweighting};
use hclab_core::graph::{sample_graph, MembershipMode, PlantedGraph};
use hclab_core::kernel::x_star;
use hclab_core::large_degree::{gaussian_limit_check, mu_profile, phase_boundaries};
use hclab_core::model::{empirical_psucc, params_from_snr, ModelParams};
use hclab_core::oracles::{binomial, exhaustive_search, prop1_bound, MAX_SUBSETS};
use hclab_core::{seed, Error};

use crate::config::{ConfigError, Init, Membership, Reweight, Rule, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Generate,
    BpRun,
    PdCurve,
    FreeEnergy,
    PhaseDiagram,
    MuProfile,
    Exhaustive,
    VerifyBounds,
    GaussianCheck,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Generate => "generate",
            Experiment::BpRun => "bp-run",
            Experiment::PdCurve => "pd-curve",
            Experiment::FreeEnergy => "free-energy",
            Experiment::PhaseDiagram => "phase-diagram",
            Experiment::MuProfile => "mu-profile",
            Experiment::Exhaustive => "exhaustive",
            Experiment::VerifyBounds => "verify-bounds",
            Experiment::GaussianCheck => "gaussian-check",
        }
    }

    /// Extension of the data file; graphs use their own text format.
    pub fn extension(&self) -> &'static str {
        match self {
            Experiment::Generate => "txt",
            _ => "csv",
        }
    }

    pub fn default_file(&self) -> PathBuf {
        PathBuf::from(format!("{}.{}", self.name(), self.extension()))
    }
}

/// Rendered experiment data.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// Column names, empty for non-tabular output.
    pub columns: Vec<String>,
    /// Everything below the metadata block.
    pub body: String,
    /// Summary values reported in the metadata block.
    pub results: Vec<(String, String)>,
}

impl Artifact {
    fn table(header: &str, rows: String) -> Artifact {
        Artifact {
            columns: header.split(',').map(String::from).collect(),
            body: format!("{header}\n{rows}"),
            results: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum GraphSource {
    File(Box<PlantedGraph>),
    Sample { mode: MembershipMode, seeds: usize },
}

#[derive(Debug, Clone)]
pub enum Plan {
    Generate { params: ModelParams, mode: MembershipMode, seed: u64 },
    BpRun { source: GraphSource, params: ModelParams, init: InitMode, iterations: usize, bp: BpConfig, rule: ThresholdRule, seed: u64 },
    PdCurve { grid: Vec<f64>, config: CurveConfig },
    FreeEnergy { params: ModelParams, pc: PopulationConfig, iterations: usize, seeds: usize, rounds: usize, rule: ThresholdRule, seed: u64 },
    PhaseDiagram { kappas: Vec<f64>, tol: f64 },
    MuProfile { lambda: f64, kappa: f64, mus: Vec<f64> },
    Exhaustive { params: ModelParams, k: usize, mode: MembershipMode, seeds: usize, iterations: usize, rule: ThresholdRule, seed: u64 },
    VerifyBounds { kappa: f64, b: f64, lambdas: Vec<f64>, pc: PopulationConfig, iterations: usize, seeds: usize, rule: ThresholdRule, seed: u64 },
    GaussianCheck { kappa: f64, lambda: f64, b: f64, pc: PopulationConfig, iterations: usize, seed: u64 },
}

/// Typed access to `[params]` with line-numbered errors.
struct Resolver<'a> {
    src: &'a Source,
}

impl Resolver<'_> {
    fn req<T: Copy>(&self, v: Option<T>, key: &str) -> Result<T, ConfigError> {
        v.ok_or_else(|| self.src.error(key, "required by this experiment"))
    }

    fn kappa(&self) -> Result<f64, ConfigError> {
        let k = self.req(self.src.config.params.kappa, "kappa")?;
        if !(k > 0.0 && k < 1.0) {
            return Err(self.src.error("kappa", format!("must lie in (0, 1), got {k}")));
        }
        Ok(k)
    }

    fn positive(&self, v: Option<f64>, key: &str) -> Result<f64, ConfigError> {
        let x = self.req(v, key)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(self.src.error(key, format!("must be positive, got {x}")));
        }
        Ok(x)
    }

    fn count(&self, v: Option<usize>, key: &str, default: usize) -> Result<usize, ConfigError> {
        let x = v.unwrap_or(default);
        if x == 0 {
            return Err(self.src.error(key, "must be at least 1"));
        }
        Ok(x)
    }

    fn grid(&self, key: &str, min: f64) -> Result<Vec<f64>, ConfigError> {
        let p = &self.src.config.params;
        let g = match key {
            "lambda_grid" => &p.lambda_grid,
            "kappa_grid" => &p.kappa_grid,
            _ => &p.mu_grid,
        };
        let g = g.as_ref().ok_or_else(|| self.src.error(key, "required by this experiment"))?;
        let v = g.values().map_err(|m| self.src.error(key, m))?;
        if let Some(x) = v.iter().find(|&&x| x < min) {
            return Err(self.src.error(key, format!("values must be >= {min}, got {x}")));
        }
        Ok(v)
    }

    fn unused(&self, present: bool, key: &str, why: &str) -> Result<(), ConfigError> {
        if present {
            return Err(self.src.error(key, format!("not used {why}")));
        }
        Ok(())
    }

    /// Model parameters from `kappa`, `b` and exactly one of `a` and `lambda`.
    fn model(&self, n: Option<usize>) -> Result<ModelParams> {
        let p = &self.src.config.params;
        let kappa = self.kappa()?;
        let b = self.positive(p.b, "b")?;
        let (made, key) = match (p.a, p.lambda) {
            (Some(_), Some(_)) => return Err(self.src.error("lambda", "give either a or lambda, not both").into()),
            (None, None) => return Err(self.src.error("lambda", "one of a and lambda is required").into()),
            (Some(a), None) => (ModelParams::new(n, a, b, kappa), "a"),
            (None, Some(l)) => (params_from_snr(kappa, b, l, n), "lambda"),
        };
        made.map_err(|e| core_or_config(self.src, e, key))
    }

    fn population(&self) -> Result<PopulationConfig, ConfigError> {
        let p = &self.src.config.params;
        let reweighting = match p.reweighting.unwrap_or_default() {
            Reweight::None => Reweighting::None,
            Reweight::Membership => Reweighting::Membership,
            Reweight::MembershipAndMoment => Reweighting::MembershipAndMoment,
        };
        Ok(PopulationConfig { size: self.count(p.population_size, "population_size", 10_000)?, reweighting })
    }

    fn n(&self) -> Result<usize, ConfigError> {
        let n = self.req(self.src.config.params.n, "n")?;
        if n == 0 {
            return Err(self.src.error("n", "must be at least 1"));
        }
        Ok(n)
    }

    fn membership(&self, n: usize, kappa: f64, default: Membership) -> Result<MembershipMode, ConfigError> {
        let p = &self.src.config.params;
        match p.membership.unwrap_or(default) {
            Membership::Bernoulli => {
                self.unused(p.k.is_some(), "k", "with Bernoulli membership")?;
                Ok(MembershipMode::Bernoulli)
            }
            Membership::Fixed => {
                let k = p.k.unwrap_or((kappa * n as f64).floor() as usize);
                if k > n {
                    return Err(self.src.error("k", format!("must be <= n = {n}, got {k}")));
                }
                Ok(MembershipMode::FixedSize(k))
            }
        }
    }
}

/// Guard violations keep their identity (and exit code); everything else is
/// reported against the config line that caused it.
fn core_or_config(src: &Source, e: Error, key: &str) -> anyhow::Error {
    if e.is_guard() {
        anyhow::Error::new(e)
    } else {
        let key = if matches!(e, Error::InvalidFraction(_)) { "kappa" } else { key };
        src.error(key, e.to_string()).into()
    }
}

fn rule(r: Rule) -> ThresholdRule {
    match r {
        Rule::MaxPsucc => ThresholdRule::MaxPsucc,
        Rule::MinErrors => ThresholdRule::MinErrors,
    }
}

pub fn plan(experiment: Experiment, src: &Source, base: &Path) -> Result<Plan> {
    let c = &src.config;
    if let Some(name) = &c.experiment {
        if name != experiment.name() {
            return Err(src
                .top_error("experiment", format!("file is for '{name}' but '{}' was requested", experiment.name()))
                .into());
        }
    }
    let r = Resolver { src };
    let p = &c.params;
    let seed = c.seed;
    let rule = rule(c.threshold_rule);
    Ok(match experiment {
        Experiment::Generate => {
            let n = r.n()?;
            let params = r.model(Some(n))?;
            let mode = r.membership(n, params.kappa, Membership::Bernoulli)?;
            Plan::Generate { params, mode, seed }
        }
        Experiment::BpRun => {
            let init = match p.init.unwrap_or_default() {
                Init::Free => InitMode::Free,
                Init::Plus => InitMode::Plus,
            };
            let damping = p.damping.unwrap_or(0.0);
            if !(0.0..1.0).contains(&damping) {
                return Err(src.error("damping", format!("must lie in [0, 1), got {damping}")).into());
            }
            let bp = BpConfig { enforce_membership: p.enforce_membership.unwrap_or(true), damping };
            let iterations = p.iterations.unwrap_or(20);
            let (source, params) = match &p.graph {
                Some(path) => {
                    for (present, key) in [
                        (p.kappa.is_some(), "kappa"),
                        (p.a.is_some(), "a"),
                        (p.b.is_some(), "b"),
                        (p.lambda.is_some(), "lambda"),
                        (p.n.is_some(), "n"),
                        (p.seeds.is_some(), "seeds"),
                    ] {
                        r.unused(present, key, "when the graph comes from a file")?;
                    }
                    let full = base.join(path);
                    let file = std::fs::File::open(&full)
                        .map_err(|e| src.error("graph", format!("cannot open {}: {e}", full.display())))?;
                    let g = PlantedGraph::read_from(std::io::BufReader::new(file))
                        .with_context(|| format!("reading graph {}", full.display()))?;
                    let params = ModelParams::new(Some(g.n()), g.a(), g.b(), g.kappa())
                        .with_context(|| format!("graph {}", full.display()))?;
                    (GraphSource::File(Box::new(g)), params)
                }
                None => {
                    let n = r.n()?;
                    let params = r.model(Some(n))?;
                    let mode = r.membership(n, params.kappa, Membership::Bernoulli)?;
                    (GraphSource::Sample { mode, seeds: r.count(p.seeds, "seeds", 1)? }, params)
                }
            };
            Plan::BpRun { source, params, init, iterations, bp, rule, seed }
        }
        Experiment::PdCurve => {
            let kappa = r.kappa()?;
            let b = r.positive(p.b, "b")?;
            let grid = r.grid("lambda_grid", 0.0)?;
            for &l in &grid {
                params_from_snr(kappa, b, l, None).map_err(|e| core_or_config(src, e, "lambda_grid"))?;
            }
            let pc = r.population()?;
            let config = CurveConfig {
                kappa,
                b,
                size: pc.size,
                iterations: p.iterations.unwrap_or(300),
                seeds: r.count(p.seeds, "seeds", 10)?,
                master_seed: seed,
                psi_rounds: r.count(p.psi_rounds, "psi_rounds", 200_000)?.max(2),
                reweighting: pc.reweighting,
                rule,
            };
            Plan::PdCurve { grid, config }
        }
        Experiment::FreeEnergy => Plan::FreeEnergy {
            params: r.model(None)?,
            pc: r.population()?,
            iterations: p.iterations.unwrap_or(300),
            seeds: r.count(p.seeds, "seeds", 10)?,
            rounds: r.count(p.psi_rounds, "psi_rounds", 200_000)?.max(2),
            rule,
            seed,
        },
        Experiment::PhaseDiagram => {
            let kappas = r.grid("kappa_grid", 0.0)?;
            if let Some(k) = kappas.iter().find(|&&k| !(k > 0.0 && k < 1.0)) {
                return Err(src.error("kappa_grid", format!("values must lie in (0, 1), got {k}")).into());
            }
            let tol = r.positive(Some(p.tol.unwrap_or(1e-8)), "tol")?;
            Plan::PhaseDiagram { kappas, tol }
        }
        Experiment::MuProfile => {
            let lambda = r.req(p.lambda, "lambda")?;
            if !(lambda >= 0.0) {
                return Err(src.error("lambda", format!("must be >= 0, got {lambda}")).into());
            }
            Plan::MuProfile { lambda, kappa: r.kappa()?, mus: r.grid("mu_grid", 0.0)? }
        }
        Experiment::Exhaustive => {
            let n = r.n()?;
            let params = r.model(Some(n))?;
            let mode = r.membership(n, params.kappa, Membership::Fixed)?;
            let k = p.k.unwrap_or((params.kappa * n as f64).floor() as usize);
            if k > n {
                return Err(src.error("k", format!("must be <= n = {n}, got {k}")).into());
            }
            let subsets = binomial(n, k);
            if subsets > MAX_SUBSETS {
                return Err(Error::InstanceTooLarge(format!(
                    "C({n}, {k}) = {subsets:.3e} subsets exceeds the limit {MAX_SUBSETS:.0e}"
                ))
                .into());
            }
            Plan::Exhaustive {
                params,
                k,
                mode,
                seeds: r.count(p.seeds, "seeds", 100)?,
                iterations: p.iterations.unwrap_or(10),
                rule,
                seed,
            }
        }
        Experiment::VerifyBounds => {
            let kappa = r.kappa()?;
            let b = r.positive(p.b, "b")?;
            let lambdas = match (p.lambda, &p.lambda_grid) {
                (Some(_), Some(_)) => {
                    return Err(src.error("lambda", "give either lambda or lambda_grid, not both").into())
                }
                (Some(l), None) => vec![l],
                _ => r.grid("lambda_grid", 0.0)?,
            };
            let key = if p.lambda.is_some() { "lambda" } else { "lambda_grid" };
            for &l in &lambdas {
                x_star(l).map_err(|e| core_or_config(src, e, key))?;
                params_from_snr(kappa, b, l, None).map_err(|e| core_or_config(src, e, key))?;
            }
            Plan::VerifyBounds {
                kappa,
                b,
                lambdas,
                pc: r.population()?,
                iterations: p.iterations.unwrap_or(300),
                seeds: r.count(p.seeds, "seeds", 1)?,
                rule,
                seed,
            }
        }
        Experiment::GaussianCheck => {
            let params = r.model(None)?;
            Plan::GaussianCheck {
                kappa: params.kappa,
                lambda: params.snr(),
                b: params.b,
                pc: r.population()?,
                iterations: p.iterations.unwrap_or(3),
                seed,
            }
        }
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn execute(plan: &Plan) -> Result<Artifact> {
    match plan {
        Plan::Generate { params, mode, seed } => {
            let g = sample_graph(params, *mode, *seed)?;
            let members = g.membership().iter().filter(|&&x| x).count();
            Ok(Artifact {
                columns: Vec::new(),
                body: g.to_text(),
                results: vec![("edges".into(), g.num_edges().to_string()), ("members".into(), members.to_string())],
            })
        }
        Plan::BpRun { source, params, init, iterations, bp: cfg, rule, seed } => {
            let graphs: Vec<PlantedGraph> = match source {
                GraphSource::File(g) => vec![(**g).clone()],
                GraphSource::Sample { mode, seeds } => (0..*seeds as u64)
                    .map(|s| sample_graph(params, *mode, seed::derive(*seed, &[s])))
                    .collect::<hclab_core::Result<_>>()?,
            };
            let mut rows = String::new();
            let mut finals = Vec::new();
            for g in &graphs {
                let mut state = bp::init(g, params, *init)?;
                let mut last;
                loop {
                    let est = bp::classify(&state, params.kappa, *rule)?;
                    let errors = est.iter().zip(g.membership()).filter(|(a, b)| a != b).count();
                    last = empirical_psucc(&est, g.membership())?;
                    writeln!(rows, "{},{},{},{},{}", g.seed(), state.t, last, errors, state.shift)?;
                    if state.t >= *iterations {
                        break;
                    }
                    bp::step(&mut state, g, params, cfg)?;
                }
                finals.push(last);
            }
            let mut art = Artifact::table("seed,t,psucc,errors,shift", rows);
            art.results.push(("mean_final_psucc".into(), mean(&finals).to_string()));
            // The plus start reads the ground truth everywhere instead of only
            // outside a ball, so it is a proxy for the plus boundary.
            let init_label = match init {
                InitMode::Free => "free",
                InitMode::Plus => "plus-proxy",
            };
            art.results.push(("init".into(), init_label.into()));
            Ok(art)
        }
        Plan::PdCurve { grid, config } => {
            let curve = pd_curve(grid, config)?;
            let csv = curve.to_csv();
            let (header, rows) = csv.split_once('\n').expect("csv has a header");
            let mut art = Artifact::table(header, rows.to_string());
            art.results.push(("lambda_s".into(), opt(curve.lambda_s)));
            let z = curve.points.iter().map(|p| p.nishimori_max_z).fold(0.0, f64::max);
            art.results.push(("nishimori_max_z".into(), z.to_string()));
            Ok(art)
        }
        Plan::FreeEnergy { params, pc, iterations, seeds, rounds, rule, seed } => {
            let th = rule.threshold(params.kappa)?;
            let modes = [InitMode::Free, InitMode::Plus];
            let tasks: Vec<(usize, usize)> = (0..2).flat_map(|m| (0..*seeds).map(move |s| (m, s))).collect();
            let rows: Vec<String> = tasks
                .par_iter()
                .map(|&(m, s)| -> hclab_core::Result<String> {
                    let run_seed = seed::derive(*seed, &[m as u64, s as u64]);
                    let pop = Population::run(params, pc, modes[m], *iterations, run_seed, |_| Ok(()))?;
                    let (ps, ps_se) = pop.psucc_at(th);
                    let fe = bethe_free_energy(&pop, params, *rounds, seed::derive(run_seed, &[1]))?;
                    Ok(format!("{},{s},{ps},{ps_se},{},{}\n", modes[m].label(), fe.psi, fe.se))
                })
                .collect::<hclab_core::Result<_>>()?;
            Ok(Artifact::table("mode,seed,psucc,psucc_se,psi,psi_se", rows.concat()))
        }
        Plan::PhaseDiagram { kappas, tol } => {
            let rows: Vec<String> = kappas
                .par_iter()
                .map(|&k| -> hclab_core::Result<String> {
                    let pb = phase_boundaries(k, *tol)?;
                    Ok(format!("{k},{},{},{}\n", opt(pb.lambda_sp), opt(pb.lambda_s), opt(pb.lambda_d)))
                })
                .collect::<hclab_core::Result<_>>()?;
            Ok(Artifact::table("kappa,lambda_sp,lambda_s,lambda_d", rows.concat()))
        }
        Plan::MuProfile { lambda, kappa, mus } => {
            let mut rows = String::new();
            for (m, d) in mu_profile(*lambda, *kappa, mus)? {
                writeln!(rows, "{m},{d}")?;
            }
            Ok(Artifact::table("mu,psi_minus_psi0", rows))
        }
        Plan::Exhaustive { params, k, mode, seeds, iterations, rule, seed } => {
            let n = params.n.expect("exhaustive search plans carry n");
            let rows: Vec<(String, f64, f64)> = (0..*seeds as u64)
                .into_par_iter()
                .map(|s| -> hclab_core::Result<(String, f64, f64)> {
                    let g = sample_graph(params, *mode, seed::derive(*seed, &[s]))?;
                    let planted: Vec<usize> = (0..n).filter(|&v| g.membership()[v]).collect();
                    let ex = exhaustive_search(&g, *k)?;
                    let ps_ex = ex.psucc(&g)?;
                    let state = bp::run(&g, params, InitMode::Free, *iterations, &BpConfig::default())?;
                    let ps_bp = empirical_psucc(&bp::classify(&state, params.kappa, *rule)?, g.membership())?;
                    let row = format!(
                        "{},{},{},{},{},{ps_ex},{ps_bp}\n",
                        g.seed(),
                        ex.best_edge_count,
                        g.count_edges_within(&planted)?,
                        ex.ties,
                        ex.overlap
                    );
                    Ok((row, ps_ex, ps_bp))
                })
                .collect::<hclab_core::Result<_>>()?;
            let ex: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let bpv: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let body: String = rows.into_iter().map(|r| r.0).collect();
            let mut art =
                Artifact::table("seed,best_edges,planted_edges,ties,overlap,psucc_exhaustive,psucc_bp", body);
            art.results.push(("mean_psucc_exhaustive".into(), mean(&ex).to_string()));
            art.results.push(("mean_psucc_bp".into(), mean(&bpv).to_string()));
            Ok(art)
        }
        Plan::VerifyBounds { kappa, b, lambdas, pc, iterations, seeds, rule, seed } => {
            let th = rule.threshold(*kappa)?;
            let mut rows = String::new();
            for (i, &lambda) in lambdas.iter().enumerate() {
                let params = params_from_snr(*kappa, *b, lambda, None)?;
                let x = x_star(lambda)?;
                let ceiling = (x - 1.0) / 4.0;
                let sqrt_ceiling = 0.5 * (x - 1.0).sqrt();
                let runs: Vec<(f64, f64, usize)> = (0..*seeds as u64)
                    .into_par_iter()
                    .map(|s| -> hclab_core::Result<(f64, f64, usize)> {
                        let mut best = (f64::NEG_INFINITY, 0.0, 0);
                        let run_seed = seed::derive(*seed, &[i as u64, s]);
                        Population::run(&params, pc, InitMode::Free, *iterations, run_seed, |p| {
                            let (ps, se) = p.psucc_at(th);
                            if ps > best.0 {
                                best = (ps, se, p.t);
                            }
                            Ok(())
                        })?;
                        Ok(best)
                    })
                    .collect::<hclab_core::Result<_>>()?;
                let (peak, se, t) = runs.iter().copied().fold((f64::NEG_INFINITY, 0.0, 0), |a, r| if r.0 > a.0 { r } else { a });
                let prop1 = if *kappa < 0.5 { Some(prop1_bound(lambda, *kappa, params.a, params.b)?.value) } else { None };
                writeln!(
                    rows,
                    "{lambda},{x},{ceiling},{sqrt_ceiling},{peak},{se},{t},{},{},{}",
                    peak <= ceiling + 4.0 * se,
                    peak <= sqrt_ceiling + 4.0 * se,
                    opt(prop1)
                )?;
            }
            Ok(Artifact::table(
                "lambda,x_star,ceiling,sqrt_ceiling,max_psucc_fr,max_psucc_se,t_at_max,below_ceiling,below_sqrt_ceiling,prop1_bound",
                rows,
            ))
        }
        Plan::GaussianCheck { kappa, lambda, b, pc, iterations, seed } => {
            let mut rows = String::new();
            for r in gaussian_limit_check(*kappa, *lambda, *b, *iterations, pc, *seed)? {
                writeln!(
                    rows,
                    "{},{},{},{},{},{},{},{},{}",
                    r.t,
                    r.mu,
                    r.mean0,
                    r.predicted_mean0,
                    r.mean1,
                    r.predicted_mean1,
                    r.var0,
                    r.var1,
                    r.max_deviation()
                )?;
            }
            Ok(Artifact::table(
                "t,mu,mean0,predicted_mean0,mean1,predicted_mean1,var0,var1,max_deviation",
                rows,
            ))
        }
    }
}
