//! Experiment harness for the `coupletime` command-line tool.

pub mod config;
pub mod experiments;
pub mod output;
pub mod svg;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use thiserror::Error;

use config::{ConfigError, ExperimentConfig};
use output::{num, Csv, OutputDir};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// A `check` run with failing criteria.
#[derive(Debug, Error)]
#[error("check failed: {0}")]
pub struct CheckFailure(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Mgf,
    MaximalCompare,
    DelayDemo,
    Bkr,
    Paths,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Mgf => "mgf",
            Command::MaximalCompare => "maximal-compare",
            Command::DelayDemo => "delay-demo",
            Command::Bkr => "bkr",
            Command::Paths => "paths",
            Command::Check => "check",
        }
    }
}

/// Resolved invocation.
pub struct Invocation {
    pub command: Command,
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<CheckFailure>().is_some() {
        return EXIT_CHECK_FAILED;
    }
    if err.downcast_ref::<ConfigError>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() {
        return EXIT_INVALID_CONFIG;
    }
    if let Some(e) = err.downcast_ref::<coupletime_core::Error>() {
        use coupletime_core::Error as E;
        return match e {
            E::InvalidGrid(_)
            | E::InvalidParameter(_)
            | E::InvalidState(_)
            | E::InvalidPair(_)
            | E::OutOfDomain(_)
            | E::UndefinedAtCorner
            | E::UnsupportedStart(_) => EXIT_INVALID_CONFIG,
            _ => EXIT_NUMERIC,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_IO;
    }
    EXIT_NUMERIC
}

/// Runs one subcommand, writing its outputs and `manifest.json` into `inv.out`.
/// Returns the lines to print.
pub fn run(inv: &Invocation) -> Result<Vec<String>> {
    inv.config.validate()?;
    let started = Instant::now();
    let mut out = OutputDir::create(&inv.out)?;
    let cfg = &inv.config;
    let lines = match inv.command {
        Command::Mgf => experiments::cmd_mgf(cfg, &mut out)?.lines,
        Command::MaximalCompare => experiments::cmd_maximal_compare(cfg, &mut out)?.lines,
        Command::DelayDemo => experiments::cmd_delay_demo(cfg, &mut out)?
            .iter()
            .map(|r| {
                format!(
                    "eps {}: mean sup² {:.6} ± {:.6}, bound {:.4}",
                    r.eps, r.mean_sup_sq.mean, r.mean_sup_sq.se, r.bound
                )
            })
            .collect(),
        Command::Bkr => experiments::cmd_bkr(cfg, &mut out)?.lines,
        Command::Paths => experiments::cmd_paths(cfg, &mut out)?,
        Command::Check => return check(cfg, out, started),
    };
    out.finish(inv.command.name(), cfg.hash(), started.elapsed().as_secs_f64())?;
    Ok(lines)
}

/// Reduced sizes used by `check`.
pub fn check_config(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.replicates = c.replicates.min(2000);
    c.bkr_runs = c.bkr_runs.min(20);
    c.stages = c.stages.min(4);
    c.path_horizon = c.path_horizon.min(2.0);
    c
}

/// Runs every experiment at reduced size and verifies the cheap invariants.
fn check(cfg: &ExperimentConfig, mut out: OutputDir, started: Instant) -> Result<Vec<String>> {
    let c = check_config(cfg);
    let mut results: Vec<(String, f64, String, bool)> = Vec::new();

    let mgf = experiments::cmd_mgf(&c, &mut out)?;
    results.push(("mgf_closed_vs_quadrature".into(), mgf.max_rel_error, "< 1e-8".into(), mgf.max_rel_error < 1e-8));

    let constant = coupletime_core::delay::delay_bound_constant()?;
    results.push(("delay_constant".into(), constant, "105.557 ± 1e-3".into(), (constant - 105.557).abs() < 1e-3));

    let maximal = experiments::cmd_maximal_compare(&c, &mut out)?;
    results.push(("overlap_nondecreasing".into(), maximal.monotone as u8 as f64, "= 1".into(), maximal.monotone));

    for row in experiments::cmd_delay_demo(&c, &mut out)? {
        let m = row.mean_sup_sq;
        results.push((
            format!("delay_bound_eps_{}", row.eps),
            m.mean,
            format!("<= {} + 3 SE", num(row.bound)),
            m.mean <= row.bound + 3.0 * m.se,
        ));
    }

    let bkr = experiments::cmd_bkr(&c, &mut out)?;
    results.push((
        "bkr_all_coupled".into(),
        bkr.coupled as f64,
        format!("= {}", bkr.runs),
        bkr.coupled == bkr.runs,
    ));

    experiments::cmd_paths(&c, &mut out)?;

    let mut csv = Csv::new(&["check", "value", "criterion", "pass"]);
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for (name, value, criterion, pass) in &results {
        csv.row(&[name.clone(), num(*value), criterion.clone(), pass.to_string()]);
        lines.push(format!("{} {name}: {} ({criterion})", if *pass { "PASS" } else { "FAIL" }, value));
        if !pass {
            failed.push(name.clone());
        }
    }
    out.write("check.csv", &csv.finish())?;
    out.finish(Command::Check.name(), c.hash(), started.elapsed().as_secs_f64())?;
    if !failed.is_empty() {
        for l in &lines {
            eprintln!("{l}");
        }
        return Err(CheckFailure(failed.join(", ")).into());
    }
    Ok(lines)
}
