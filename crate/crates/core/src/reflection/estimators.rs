//! Monte Carlo estimators built on the coupling engine.

use serde::{Deserialize, Serialize};

use super::{quadrant_phi, run_reflection_sync_with, CouplingConfig, CouplingOutcome, RunOptions};
use crate::error::{Error, Result};
use crate::sim_kernel::{crossing_probability, first_passage_mgf, RngStream, StepPolicy};
use crate::stats::{replicate_map, MeanSe};

/// Discount below which a replicate's contribution is scored as zero: runs
/// longer than `ln(1/DISCOUNT_FLOOR)/α` contribute less than this.
const DISCOUNT_FLOOR: f64 = 1e-16;
const MAX_RESAMPLES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfEstimate {
    pub estimate: f64,
    pub se: f64,
    pub n: usize,
    /// Replicates that exhausted the step cap and were redrawn.
    pub rejected: u64,
    /// Replicates stopped at the discount horizon and scored 0.
    pub discounted: u64,
}

struct Replicate {
    score: f64,
    rejected: u64,
    discounted: bool,
}

fn mgf_runner<F>(rng: &RngStream, cfg: &CouplingConfig, alpha: f64, n: usize, dt: f64, stop_after_t1: bool, score: F) -> Result<MgfEstimate>
where
    F: Fn(&super::CouplingRun) -> f64 + Sync + Send,
{
    cfg.validate()?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("at least one replicate required".into()));
    }
    if alpha == 0.0 {
        return Ok(MgfEstimate {
            estimate: 1.0,
            se: 0.0,
            n,
            rejected: 0,
            discounted: 0,
        });
    }
    let mut opts = RunOptions::new(StepPolicy::adaptive(dt));
    opts.policy.validate()?;
    opts.horizon = -DISCOUNT_FLOOR.ln() / alpha;
    opts.stop_after_t1 = stop_after_t1;
    let results: Vec<Result<Replicate>> = replicate_map(rng, n, |_, stream| {
        let mut rejected = 0;
        let mut r = stream.clone();
        loop {
            let run = run_reflection_sync_with(&mut r, cfg, &opts)?;
            let stopped = run.outcome == CouplingOutcome::Truncated && (run.t1.is_none() || !stop_after_t1);
            if stopped && !run.hit_horizon {
                rejected += 1;
                if rejected > MAX_RESAMPLES {
                    return Err(Error::NonTermination("replicate kept exhausting the step cap".into()));
                }
                r = stream.child(rejected);
                continue;
            }
            if stopped {
                return Ok(Replicate {
                    score: 0.0,
                    rejected,
                    discounted: true,
                });
            }
            return Ok(Replicate {
                score: score(&run),
                rejected,
                discounted: false,
            });
        }
    });
    let mut scores = Vec::with_capacity(n);
    let (mut rejected, mut discounted) = (0, 0);
    for r in results {
        let r = r?;
        scores.push(r.score);
        rejected += r.rejected;
        discounted += r.discounted as u64;
    }
    let m = MeanSe::from_samples(&scores);
    Ok(MgfEstimate {
        estimate: m.mean,
        se: m.se,
        n,
        rejected,
        discounted,
    })
}

/// Rao-Blackwellized estimate of `E[exp(-α T_couple)]`: only stage 1 is simulated,
/// and the synchronized stage is replaced by its first-passage transform over the
/// distance `max(s0 ∨ s̃0, M1) - m`.
pub fn rao_blackwell_mgf(rng: &RngStream, cfg: &CouplingConfig, alpha: f64, n: usize, dt: f64) -> Result<MgfEstimate> {
    let c = cfg.normalized();
    let m = c.midpoint();
    let floor = c.s0.max(c.s_tilde0);
    mgf_runner(rng, cfg, alpha, n, dt, true, move |run| {
        let t1 = run.t1.unwrap_or(f64::INFINITY);
        let tail = if run.outcome == CouplingOutcome::CoupledAtT1 {
            1.0
        } else {
            first_passage_mgf(floor.max(run.m1) - m, alpha).unwrap_or(0.0)
        };
        (-alpha * t1).exp() * tail
    })
}

/// Crude estimate `mean(exp(-α T_couple))` from full runs. Uses the same replicate
/// streams as [`rao_blackwell_mgf`], so stage 1 is matched path by path.
pub fn crude_mgf(rng: &RngStream, cfg: &CouplingConfig, alpha: f64, n: usize, dt: f64) -> Result<MgfEstimate> {
    mgf_runner(rng, cfg, alpha, n, dt, false, move |run| {
        (-alpha * run.t_couple.unwrap_or(f64::INFINITY)).exp()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub t: f64,
    pub cdf: f64,
    pub se: f64,
}

/// Empirical `P(T_couple ≤ t)` on `t_grid`, all points sharing the same replicates.
pub fn estimate_coupling_cdf(rng: &RngStream, cfg: &CouplingConfig, t_grid: &[f64], n: usize, dt: f64) -> Result<Vec<CdfPoint>> {
    cfg.validate()?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidGrid("time grid must be non-empty and positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("at least one replicate required".into()));
    }
    let mut opts = RunOptions::new(StepPolicy::adaptive(dt));
    opts.policy.validate()?;
    opts.horizon = t_grid.iter().cloned().fold(0.0, f64::max);
    let times: Vec<Result<f64>> = replicate_map(rng, n, |_, mut r| {
        let run = run_reflection_sync_with(&mut r, cfg, &opts)?;
        Ok(run.t_couple.unwrap_or(f64::INFINITY))
    });
    let mut tc = Vec::with_capacity(n);
    for t in times {
        tc.push(t?);
    }
    Ok(t_grid
        .iter()
        .map(|&t| {
            let k = tc.iter().filter(|&&x| x <= t).count();
            let p = MeanSe::proportion(k, n);
            CdfPoint { t, cdf: p.mean, se: p.se }
        })
        .collect())
}

/// How the two quadrant coordinates are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadrantCoupling {
    /// `dV = -dU` until the diagonal is reached, then `dV = dU`.
    Reflection,
    /// `dV = dU` throughout.
    Synchronized,
}

/// Monte Carlo drift of `Φ(U, V)` over `[0, horizon]` for two Brownian motions on the
/// quadrant stopped at its boundary. Returns the mean change `Φ_h - Φ_0` with SE.
pub fn phi_drift(rng: &RngStream, u0: f64, v0: f64, coupling: QuadrantCoupling, horizon: f64, n: usize) -> Result<MeanSe> {
    let phi0 = quadrant_phi(u0, v0)?;
    if !(horizon > 0.0) || n == 0 {
        return Err(Error::InvalidParameter("positive horizon and replicate count required".into()));
    }
    const SUBSTEPS: usize = 64;
    let h = horizon / SUBSTEPS as f64;
    let sd = (4.0 * h).sqrt();
    let changes = replicate_map(rng, n, |_, mut r| {
        match coupling {
            QuadrantCoupling::Reflection => {
                // U + V is constant; D = U - V moves with variance 4 per unit time.
                let sum = u0 + v0;
                let mut d = u0 - v0;
                if d == 0.0 {
                    return 0.0;
                }
                for _ in 0..SUBSTEPS {
                    let d1 = d + sd * r.normal();
                    if r.uniform() <= crossing_probability(d, d1, 0.0, 4.0 * h) {
                        return 1.0 - phi0; // on the diagonal Φ = 1 from then on
                    }
                    let edge = sum * d.signum();
                    if r.uniform() <= crossing_probability(d, d1, edge, 4.0 * h) {
                        return -phi0; // boundary of the quadrant
                    }
                    d = d1;
                }
                (1.0 - d.abs() / sum) - phi0
            }
            QuadrantCoupling::Synchronized => {
                // U - V is constant; S = U + V moves with variance 4 per unit time.
                let d = (u0 - v0).abs();
                let mut s = u0 + v0;
                for _ in 0..SUBSTEPS {
                    let s1 = s + sd * r.normal();
                    if r.uniform() <= crossing_probability(s, s1, d, 4.0 * h) {
                        return -phi0;
                    }
                    s = s1;
                }
                (1.0 - d / s) - phi0
            }
        }
    });
    Ok(MeanSe::from_samples(&changes))
}
