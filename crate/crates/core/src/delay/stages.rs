use serde::{Deserialize, Serialize};

use super::kernel::{delay_bound_constant, DelayKernel};
use super::solver::{solve_delayed_coupling_with, DelayOptions, DelayOutcome, LocalizationGuard};
use crate::error::{Error, Result};
use crate::levy::DiffusionState;
use crate::reflection::{run_reflection_sync_with, CouplingConfig, CouplingOutcome, RunOptions};
use crate::sim_kernel::{RngStream, StepPolicy};
use crate::stats::replicate_map;

/// Multiplier applied to each calibrated stage tolerance.
pub const SAFETY_FACTOR: f64 = 0.8;
const BOOTSTRAP_RESAMPLES: usize = 200;
const DELAY_BOUND_FALLBACK: f64 = 105.557;

/// Worst-case start in scaled units: `L - L̂ = 1` and `|X̂| = 1`, `X = 0`.
pub fn worst_case_start() -> CouplingConfig {
    CouplingConfig {
        b0: 1.0,
        s0: 1.0,
        b_tilde0: -1.0,
        s_tilde0: 0.0,
    }
}

/// Calibrated stage tolerances `ε_1 > ε_2 > …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCalibration {
    pub epsilons: Vec<f64>,
    /// Bootstrap standard errors of the tolerances.
    pub se: Vec<f64>,
    /// Scaled-time quantiles `q_n` with `P(T̂ > q_n) = 4⁻ⁿ`.
    pub quantiles: Vec<f64>,
    pub n_samples: usize,
}

/// Draws the scaled coupling time `T̂ = T2/ε²` from the worst-case start
/// (`ε = 1`), stopping at `horizon` (censored samples are `+∞`).
pub fn sample_scaled_times(rng: &RngStream, n: usize, dt: f64, horizon: f64) -> Result<Vec<f64>> {
    let mut opts = RunOptions::new(StepPolicy::adaptive(dt));
    opts.policy.validate()?;
    opts.horizon = horizon;
    let cfg = worst_case_start();
    let out: Vec<Result<f64>> = replicate_map(rng, n, |_, mut r| {
        let run = run_reflection_sync_with(&mut r, &cfg, &opts)?;
        Ok(match run.outcome {
            CouplingOutcome::Truncated if !run.hit_horizon => {
                return Err(Error::NonTermination("calibration run exhausted the step cap".into()))
            }
            CouplingOutcome::Truncated => f64::INFINITY,
            _ => run.t_couple.unwrap_or(f64::INFINITY),
        })
    });
    out.into_iter().collect()
}

/// Survival `P(T̂ > u)` of a sorted sample, interpolated linearly in
/// `(ln u, ln P)` between order statistics.
fn survival(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len() as f64;
    let k = sorted.partition_point(|&v| v <= u);
    if k == 0 {
        return 1.0;
    }
    if k >= sorted.len() {
        return 0.0;
    }
    let (lo, hi) = (sorted[k - 1], sorted[k]);
    let (p_lo, p_hi) = ((n - k as f64) / n, (n - k as f64 - 1.0) / n);
    if !(lo > 0.0) || !hi.is_finite() || hi <= lo {
        return p_lo;
    }
    let w = (u.ln() - lo.ln()) / (hi.ln() - lo.ln());
    if p_hi <= 0.0 {
        return p_lo * (1.0 - w);
    }
    (p_lo.ln() + w * (p_hi.ln() - p_lo.ln())).exp()
}

/// Solves `P(T̂ > q) = p` by bisection in `ln q` on the interpolated survival.
fn tail_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    let finite: Vec<f64> = sorted.iter().cloned().filter(|v| v.is_finite() && *v > 0.0).collect();
    if finite.is_empty() {
        return Err(Error::CalibrationFailure("no finite scaled times".into()));
    }
    let (mut lo, mut hi) = (finite[0].ln(), finite[finite.len() - 1].ln());
    if survival(sorted, hi.exp()) > p {
        return Err(Error::CalibrationFailure(format!(
            "tail level {p:e} lies beyond the censoring horizon"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if survival(sorted, mid.exp()) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(hi.exp())
}

fn epsilon_for(q: f64, n: usize) -> f64 {
    SAFETY_FACTOR * (0.25f64.powi(n as i32) / q).sqrt()
}

/// Stage tolerances from a sample of scaled times:
/// `ε_n = 0.8·sup{ε : P(T̂ > 4⁻ⁿ/ε²) ≤ 4⁻ⁿ} = 0.8·√(4⁻ⁿ/q_n)`.
pub fn stage_epsilons_from_sample(rng: &RngStream, sample: &[f64], n_max: usize) -> Result<StageCalibration> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("at least one stage required".into()));
    }
    let n = sample.len();
    let needed = 10.0 * 4f64.powi(n_max as i32);
    if (n as f64) < needed {
        return Err(Error::CalibrationFailure(format!(
            "{n} samples resolve fewer than {n_max} stages; need at least {needed}"
        )));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut quantiles = Vec::with_capacity(n_max);
    let mut epsilons = Vec::with_capacity(n_max);
    for k in 1..=n_max {
        let q = tail_quantile(&sorted, 0.25f64.powi(k as i32))?;
        quantiles.push(q);
        epsilons.push(epsilon_for(q, k));
    }
    let boots: Vec<Vec<f64>> = replicate_map(rng, BOOTSTRAP_RESAMPLES, |_, mut r| {
        let mut b: Vec<f64> = (0..n).map(|_| sorted[((r.uniform() * n as f64) as usize).min(n - 1)]).collect();
        b.sort_by(f64::total_cmp);
        (1..=n_max)
            .map(|k| tail_quantile(&b, 0.25f64.powi(k as i32)).map(|q| epsilon_for(q, k)).unwrap_or(f64::NAN))
            .collect()
    });
    let se = (0..n_max)
        .map(|k| {
            let v: Vec<f64> = boots.iter().map(|b| b[k]).filter(|v| v.is_finite()).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        })
        .collect();
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::CalibrationFailure("stage tolerances are not strictly decreasing".into()));
    }
    Ok(StageCalibration {
        epsilons,
        se,
        quantiles,
        n_samples: n,
    })
}

/// Monte Carlo calibration with `10·4^{n_max}·4` samples of the scaled time.
pub fn calibrate_stage_epsilons(rng: &RngStream, n_max: usize, dt: f64) -> Result<StageCalibration> {
    let n = 40 * 4usize.pow(n_max as u32);
    calibrate_stage_epsilons_with(rng, n_max, dt, n)
}

pub fn calibrate_stage_epsilons_with(rng: &RngStream, n_max: usize, dt: f64, n_samples: usize) -> Result<StageCalibration> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("at least one stage required".into()));
    }
    let sample = sample_scaled_times(&rng.child(1), n_samples, dt, 1e30)?;
    stage_epsilons_from_sample(&rng.child(2), &sample, n_max)
}

/// Settings for [`concatenated_coupling`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    /// Stage tolerances `ε_1, ε_2, …` (stage `n ≥ 2` has time budget `4⁻ⁿ`).
    pub epsilons: Vec<f64>,
    /// Kernel parameter per stage.
    pub kernels: Vec<f64>,
    /// Step floor in units of the squared target gap of each stage.
    pub dt: f64,
    /// The copies are merged once the gap is at most this.
    pub merge_tol: f64,
    /// Time limit of the unbudgeted first stage.
    pub stage1_horizon: f64,
    pub max_restarts: usize,
    pub guard: Option<LocalizationGuard>,
}

impl StagePlan {
    /// Plan with kernels from [`StagePlan::bound_kernel`] and merge tolerance `1e-7`.
    pub fn new(epsilons: Vec<f64>, dt: f64) -> Result<Self> {
        let mut plan = Self {
            kernels: Vec::new(),
            epsilons,
            dt,
            merge_tol: 1e-7,
            stage1_horizon: 1e12,
            max_restarts: 1000,
            guard: None,
        };
        plan.kernels = (1..=plan.epsilons.len()).map(|n| plan.bound_kernel(n)).collect();
        plan.validate()?;
        Ok(plan)
    }

    /// Kernel parameter for stage `n` from the sup-distance bound and Markov's
    /// inequality: `κ = 4⁻ⁿ·δ²/C` gives `P(sup |B̂ - B̃| > δ) ≤ 4⁻ⁿ` with `δ` the
    /// stage's target gap and `C` = [`delay_bound_constant`].
    pub fn bound_kernel(&self, n: usize) -> f64 {
        let c = delay_bound_constant().unwrap_or(DELAY_BOUND_FALLBACK);
        let target = self.target(n);
        (Self::budget(n) * target * target / c).min(0.25)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 0.5)) {
            return Err(Error::InvalidParameter("stage tolerances must lie in (0, 1/2)".into()));
        }
        if self.kernels.len() != self.epsilons.len() {
            return Err(Error::InvalidParameter("one kernel parameter per stage required".into()));
        }
        if !(self.dt > 0.0 && self.dt < 1.0) || !(self.merge_tol > 0.0) || !(self.stage1_horizon > 0.0) {
            return Err(Error::InvalidParameter("invalid step, merge tolerance or horizon".into()));
        }
        Ok(())
    }

    pub fn budget(n: usize) -> f64 {
        0.25f64.powi(n as i32)
    }

    /// Gap the stage `n` approximation aims for: the next tolerance, or the merge
    /// tolerance after the last stage.
    fn target(&self, n: usize) -> f64 {
        self.epsilons.get(n).copied().unwrap_or(self.merge_tol).max(self.merge_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub attempt: usize,
    pub n: usize,
    pub epsilon: f64,
    pub kernel: f64,
    /// Time budget (`+∞` for stage 1).
    pub budget: f64,
    pub duration: f64,
    pub achieved_gap: f64,
    pub defaulted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLedger {
    pub stages: Vec<StageRecord>,
    pub total_time: f64,
    pub restarts: usize,
    pub coupled: bool,
    pub last: DiffusionState,
    pub last_hat: DiffusionState,
    /// Meeting and merge times of the reference in the first stage of the
    /// successful attempt, on the overall clock.
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

impl StageLedger {
    pub fn defaults(&self) -> usize {
        self.stages.iter().filter(|s| s.defaulted).count()
    }

    pub fn attempts(&self) -> usize {
        self.restarts + self.coupled as usize
    }
}

/// Result of one pass through the stage sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Attempt {
    pub coupled: bool,
    pub last: DiffusionState,
    pub last_hat: DiffusionState,
    pub elapsed: f64,
    /// `T1`, `T2` of stage 1, relative to the start of the attempt.
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

/// Runs stages `1, 2, …` once from the given states, appending records; stops
/// at the first default or when the copies merge.
pub(crate) fn run_attempt(
    r: &mut RngStream,
    mut x: DiffusionState,
    mut xh: DiffusionState,
    plan: &StagePlan,
    attempt: usize,
    stages: &mut Vec<StageRecord>,
) -> Result<Attempt> {
    let mut elapsed = 0.0;
    let (mut t1, mut t2) = (None, None);
    for n in 1..=plan.epsilons.len() {
        let budget = if n == 1 { plan.stage1_horizon } else { StagePlan::budget(n) };
        let target = plan.target(n);
        let kernel = DelayKernel::new(plan.kernels[n - 1])?;
        let mut policy = StepPolicy::adaptive(plan.dt * target * target);
        policy.max_step = budget;
        let mut opts = DelayOptions::new(policy, budget);
        opts.guard = plan.guard;
        let run = solve_delayed_coupling_with(r, x, xh, &kernel, &opts)?;
        if n == 1 {
            (t1, t2) = (run.t1, run.t2);
        }
        elapsed += run.last.t;
        x = DiffusionState {
            x: run.last.x,
            l: run.last.l,
        };
        xh = DiffusionState {
            x: run.last.x_hat,
            l: run.last.l_hat,
        };
        let gap = run.gap();
        let merged = run.outcome == DelayOutcome::Coupled && gap <= plan.merge_tol;
        // Running out of calibrated stages without merging is a default as well.
        let defaulted = run.outcome != DelayOutcome::Coupled || (n == plan.epsilons.len() && !merged);
        stages.push(StageRecord {
            attempt,
            n,
            epsilon: plan.epsilons[n - 1],
            kernel: plan.kernels[n - 1],
            budget: if n == 1 { f64::INFINITY } else { budget },
            duration: run.last.t,
            achieved_gap: gap,
            defaulted,
        });
        if merged {
            return Ok(Attempt {
                coupled: true,
                last: x,
                last_hat: x,
                elapsed,
                t1,
                t2,
            });
        }
        if defaulted {
            break;
        }
    }
    Ok(Attempt {
        coupled: false,
        last: x,
        last_hat: xh,
        elapsed,
        t1,
        t2,
    })
}

/// Staged coupling of a driving Brownian motion with a delayed copy.
///
/// Stage 1 is a complete delayed coupling; each later stage `n` restarts the
/// reference at the delayed copy's current state and runs a delayed coupling
/// with kernel `κ_n` within the budget `4⁻ⁿ`. The copies are merged once the
/// gap `||X̂| - |X|| + |L̂ - L|` is at most the merge tolerance. A stage that
/// overruns its budget (or exhausts the stage list) is a default, and the
/// sequence restarts from stage 1 at the current states with fresh randomness.
pub fn concatenated_coupling(rng: &RngStream, start: DiffusionState, start_hat: DiffusionState, plan: &StagePlan) -> Result<StageLedger> {
    plan.validate()?;
    let (mut x, mut xh) = (start, start_hat);
    let mut stages = Vec::new();
    let mut total_time = 0.0;
    for attempt in 0..=plan.max_restarts {
        let mut r = rng.child(attempt as u64);
        let a = run_attempt(&mut r, x, xh, plan, attempt, &mut stages)?;
        let offset = total_time;
        total_time += a.elapsed;
        x = a.last;
        xh = a.last_hat;
        if a.coupled {
            return Ok(StageLedger {
                stages,
                total_time,
                restarts: attempt,
                coupled: true,
                last: x,
                last_hat: xh,
                t1: a.t1.map(|t| t + offset),
                t2: a.t2.map(|t| t + offset),
            });
        }
    }
    Err(Error::NonTermination(format!(
        "no successful attempt within {} restarts",
        plan.max_restarts
    )))
}
