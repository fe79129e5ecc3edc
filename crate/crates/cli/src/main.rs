use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coupletime::config::{ConfigError, ExperimentConfig};
use coupletime::{exit_code, run, Command, Invocation};

/// Coupling experiments for Brownian motion with local time and BKR diffusions.
///
/// Every subcommand reads an optional JSON config (all fields optional), writes
/// CSV tables (floats with 17 significant digits), SVG plots and a
/// manifest.json with SHA-256 checksums into the output directory. The
/// COUPLETIME_OUT environment variable overrides --out.
///
/// Exit codes: 0 success, 2 invalid config, 3 numeric failure, 4 check failure.
#[derive(Parser, Debug)]
#[command(name = "coupletime", version)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (default: the config's output_dir, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Coupling-time transform: closed form, quadrature and Monte Carlo.
    ///
    /// mgf.csv: alpha,b,closed_form,quadrature,mc_estimate,mc_se
    /// mgf_cdf.csv: t,cdf,se
    Mgf {
        /// Rates to evaluate (overrides alpha_grid); must be positive.
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        alpha: Vec<f64>,
    },
    /// Maximal-coupling overlap against the reflection/synchronized coupling.
    ///
    /// maximal.csv: t,overlap,tv,immersed_cdf,immersed_se
    /// maximal_summary.csv: alpha,maximal_mgf,immersed_mgf
    MaximalCompare,
    /// Delayed coupling: mean squared sup distance against the linear bound.
    ///
    /// delay.csv: eps,dt,mean_sup_sq,se,bound
    ///
    /// Each ε uses the step min(dt, ε³/4) so the delay is resolved.
    DelayDemo,
    /// Staged BKR couplings and a sample variant-coupling path.
    ///
    /// bkr.csv: t1,t2,restarts,total_time
    /// bkr_ledgers.csv: run_id,stages,defaults,total_time
    /// bkr_path.csv: t,x,y,k,x_tilde,y_tilde
    Bkr,
    /// Sample paths: coupling run, Brownian motion with supremum, BKR region plot.
    ///
    /// paths_coupling.csv: t,b,s,b_tilde,s_tilde
    /// levy.csv: t,b,s
    Paths,
    /// Runs every experiment at reduced size and checks its invariants.
    ///
    /// check.csv: check,value,criterion,pass
    Check,
}

fn invocation(cli: Cli) -> anyhow::Result<Invocation> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let command = match cli.command {
        Cmd::Mgf { alpha } => {
            if !alpha.is_empty() {
                if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
                    return Err(ConfigError(format!("--alpha must be positive, got {a}")).into());
                }
                config.alpha_grid = alpha;
            }
            Command::Mgf
        }
        Cmd::MaximalCompare => Command::MaximalCompare,
        Cmd::DelayDemo => Command::DelayDemo,
        Cmd::Bkr => Command::Bkr,
        Cmd::Paths => Command::Paths,
        Cmd::Check => Command::Check,
    };
    let out = std::env::var_os("COUPLETIME_OUT")
        .map(PathBuf::from)
        .or(cli.out)
        .or_else(|| config.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(ConfigError("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    Ok(Invocation { command, config, out })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = invocation(cli).and_then(|inv| run(&inv).map(|lines| (inv, lines)));
    match result {
        Ok((inv, lines)) => {
            for l in lines {
                println!("{l}");
            }
            println!("outputs written to {}", inv.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
