use serde::{Deserialize, Serialize};

use super::coupling::{delayed_variant_from_states, BkrOptions, BkrOutcome};
use super::{BkrState, SwitchLabels};
use crate::delay::{run_attempt, DelayKernel, LocalizationGuard, StageLedger, StagePlan, StageRecord};
use crate::error::{Error, Result};
use crate::levy::DiffusionState;
use crate::scalar::sgn64;
use crate::sim_kernel::RngStream;

/// Settings for [`concatenated_bkr_coupling`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkrPlan {
    /// Kernel parameter of the initial delayed variant coupling.
    pub kernel0: f64,
    /// Step floor of the initial coupling.
    pub dt0: f64,
    /// Time limit of the initial coupling.
    pub horizon0: f64,
    /// Stages run on the reduced pair `(Y, |X| + |Y|)`.
    pub stages: StagePlan,
    pub labels: SwitchLabels,
    pub max_restarts: usize,
}

impl BkrPlan {
    pub fn new(stages: StagePlan) -> Self {
        Self {
            kernel0: 1e-3,
            dt0: 1e-5,
            horizon0: 1e8,
            stages,
            labels: SwitchLabels::Consistent,
            max_restarts: 1000,
        }
    }
}

fn reduced(s: &BkrState) -> DiffusionState {
    DiffusionState { x: s.y, l: s.ell() }
}

/// Rebuilds a BKR state from reduced coordinates `(y, ℓ)` and the sign of `x`.
fn lift(prev: &BkrState, r: DiffusionState, labels: SwitchLabels) -> BkrState {
    let x = sgn64(prev.x) * (r.l - r.x.abs()).max(0.0);
    let mut s = BkrState {
        x,
        y: r.x,
        k: prev.k,
        a: prev.a,
        h: prev.h,
    };
    if x.abs() < s.h {
        s.k = labels.label(true);
    } else if s.y.abs() < s.h {
        s.k = labels.label(false);
    }
    s
}

/// Staged coupling of two BKR diffusions: a delayed variant coupling brings the
/// delayed copy close to the driver at the time `Y` and the reference vanish
/// together; then, while `X` keeps its sign, `(Y, |X| + |Y|)` is a Brownian
/// motion with its local time at 0 (plus a constant) and the Brownian stage
/// sequence is applied to it, with a guard declaring default once `|X|` or
/// `|X̂|` falls below half its value at the start of the sequence. Any default
/// restarts the whole procedure from the current states.
pub fn concatenated_bkr_coupling(rng: &RngStream, start: (f64, f64), start_hat: (f64, f64), plan: &BkrPlan) -> Result<StageLedger> {
    plan.stages.validate()?;
    let kernel = DelayKernel::new(plan.kernel0)?;
    let mut d = BkrState::new(start.0, start.1, plan.labels)?;
    let mut dh = BkrState::new(start_hat.0, start_hat.1, plan.labels)?;
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut total_time = 0.0;
    for attempt in 0..=plan.max_restarts {
        let mut r = rng.child(attempt as u64);
        let mut opts = BkrOptions::new(plan.dt0, plan.horizon0);
        opts.labels = plan.labels;
        let run = delayed_variant_from_states(&mut r, d, dh, &kernel, &opts)?;
        let gap = run.gap().unwrap_or(f64::INFINITY);
        let offset = total_time;
        total_time += run.last.t;
        d = run.last.driver;
        dh = run.last.delayed.unwrap_or(dh);
        let same_side = d.x != 0.0 && dh.x != 0.0 && sgn64(d.x) == sgn64(dh.x);
        let defaulted0 = run.outcome != BkrOutcome::Coupled || !same_side;
        stages.push(StageRecord {
            attempt,
            n: 0,
            epsilon: f64::NAN,
            kernel: plan.kernel0,
            budget: plan.horizon0,
            duration: run.last.t,
            achieved_gap: gap,
            defaulted: defaulted0,
        });
        if defaulted0 {
            continue;
        }
        let mut sp = plan.stages.clone();
        sp.guard = Some(LocalizationGuard {
            b_min: 0.5 * d.x.abs(),
            b_hat_min: 0.5 * dh.x.abs(),
        });
        let a = run_attempt(&mut r, reduced(&d), reduced(&dh), &sp, attempt, &mut stages)?;
        total_time += a.elapsed;
        d = lift(&d, a.last, plan.labels);
        dh = lift(&dh, a.last_hat, plan.labels);
        if a.coupled {
            dh = d;
            return Ok(StageLedger {
                stages,
                total_time,
                restarts: attempt,
                coupled: true,
                last: reduced(&d),
                last_hat: reduced(&dh),
                t1: run.t1.map(|t| t + offset),
                t2: run.t2.map(|t| t + offset),
            });
        }
    }
    Err(Error::NonTermination(format!(
        "no successful BKR attempt within {} restarts",
        plan.max_restarts
    )))
}
