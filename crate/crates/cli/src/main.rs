use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod run;

use run::Failure;

#[derive(Parser)]
#[command(name = "phasekin", version, about = "Phase-space kinetic experiments on periodic lattices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration; all keys default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent directory of the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides the `threads` config key; 1 is the reproducible baseline).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, Debug)]
pub enum Cmd {
    /// Wigner transform of the initial data and its round-trip residual.
    Transform,
    /// Picard solve of the density-matrix Boltzmann equation.
    EvolveBoltzmann,
    /// Picard solve of the truncated hierarchy.
    EvolveHierarchy,
    /// Compare B(γ, γ) against the classical collision operator.
    OracleCompare,
    /// Norm time series along the free flow.
    Norms,
    /// Quadrature sweeps of the integrals behind the bilinear estimate.
    VerifyEstimates,
}

impl Cmd {
    pub fn name(self) -> &'static str {
        match self {
            Cmd::Transform => "transform",
            Cmd::EvolveBoltzmann => "evolve-boltzmann",
            Cmd::EvolveHierarchy => "evolve-hierarchy",
            Cmd::OracleCompare => "oracle-compare",
            Cmd::Norms => "norms",
            Cmd::VerifyEstimates => "verify-estimates",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return ExitCode::from(1);
            }
        },
        None => String::new(),
    };
    let cfg = match config::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return ExitCode::from(1);
        }
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let threads = cli.threads.or(cfg.threads).unwrap_or(1);
    if threads == 0 {
        eprintln!("error: field `threads`: must be >= 1");
        return ExitCode::from(1);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let mut r = match run::Run::create(&cli.out, cli.cmd.name(), &cfg, seed, threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = pool.install(|| commands::dispatch(cli.cmd, &cfg, seed, &mut r));
    let code = match &outcome {
        Ok(()) => 0,
        Err(Failure::Validation(_)) => 1,
        Err(Failure::Numerical(_)) => 2,
    };
    if let Err(f) = &outcome {
        eprintln!("error: {f}");
        r.record("status", "failed");
        r.record("error", f.to_string());
    } else {
        r.record("status", "ok");
    }
    if let Err(e) = r.finish(&cfg) {
        eprintln!("error: writing manifest: {e}");
        return ExitCode::from(1);
    }
    println!("{}", r.dir.display());
    ExitCode::from(code)
}
