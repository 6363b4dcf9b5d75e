//! `hclab <experiment> --config <path> [--force] [--threads N] [--out DIR]`
//!
//! Exit codes: 0 ok, 1 other failure, 2 config error, 3 guard violation,
//! 4 numerical divergence.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod output;

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use config::{ConfigError, Source};
use experiments::Experiment;
use hclab_core::Error;

#[derive(Debug, Parser)]
#[command(name = "hclab", version, about = "Hidden community detection experiments")]
struct Cli {
    experiment: Experiment,
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Recompute even when a cached result exists.
    #[arg(long)]
    force: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<NonZeroUsize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                _ if err.is_guard() => 3,
                Error::NumericalDivergence(_) => 4,
                Error::Io(_) | Error::BracketMiss(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn run(cli: &Cli) -> Result<PathBuf> {
    let text = fs::read_to_string(&cli.config).with_context(|| format!("reading {}", cli.config.display()))?;
    let src = Source::parse(&text)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.get()).build_global()?;
    }
    let base = cli.config.parent().unwrap_or(Path::new("."));
    let plan = experiments::plan(cli.experiment, &src, base)?;

    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let file = src.config.output.file.as_ref().map_or_else(|| cli.experiment.default_file(), PathBuf::from);
    let target = cli.out.join(&file);
    let plt_target = target.with_extension("plt");
    let cache = output::Cache::new(output::cache_dir(&cli.out), output::cache_key(cli.experiment, &src));

    let cached = if cli.force { None } else { cache.load() };
    let (data, plt) = match cached {
        Some((data, plt)) => {
            eprintln!("cached result reused (pass --force to recompute)");
            (data, plt)
        }
        None => {
            let art = experiments::execute(&plan).with_context(|| format!("{} failed", cli.experiment.name()))?;
            let data = output::render(cli.experiment, &src, &art);
            let plt = (src.config.output.manifest && !art.columns.is_empty())
                .then(|| output::manifest(&file, &art.columns));
            cache.store(&data, plt.as_deref())?;
            (data, plt)
        }
    };
    fs::write(&target, data).with_context(|| format!("writing {}", target.display()))?;
    if let Some(p) = plt {
        fs::write(&plt_target, p).with_context(|| format!("writing {}", plt_target.display()))?;
    }
    Ok(target)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
