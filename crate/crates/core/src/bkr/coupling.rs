use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{protection_holds, BkrState, SwitchLabels};
use crate::delay::DelayKernel;
use crate::error::{Error, Result};
use crate::scalar::sgn64;
use crate::sim_kernel::{crossing_probability, RngStream, StepPolicy};

/// Grid point of a coupled BKR run: driver, undelayed reference and (optionally)
/// delayed copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkrPairPoint {
    pub t: f64,
    pub driver: BkrState,
    pub reference: BkrState,
    pub delayed: Option<BkrState>,
}

/// Which test detected the joint zero of `|Y|` and `|Ỹ|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum T2Trigger {
    /// The dominating coordinate crossed zero within a step, reversing the order.
    Reversal,
    /// Both coordinates ended a step within the zero tolerance.
    BothSmall,
    /// Bridge test: the dominating coordinate touched zero within a step while
    /// the two were within the zero tolerance.
    Crossing,
}

/// Per-step checks accumulated over every grid point of a run, so that long
/// runs can be verified without recording them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkrDiagnostics {
    /// Largest `|X̃_t - (X̃_0 - (X_{t∧T1} - X_0)) - (X_{t∨T1} - X_{T1})|`.
    pub max_reconstruction_error: f64,
    /// Largest `|X_t - X̃_t|` over grid points `t ≥ T1`.
    pub max_post_t1_gap: f64,
    /// Whether `|Y| - |Ỹ|` kept a weakly constant sign on the grid after `T1`.
    pub domination_holds: bool,
    pub t2_trigger: Option<T2Trigger>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BkrOutcome {
    Coupled,
    Horizon,
    StepCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkrCouplingRun {
    /// Recorded grid (empty unless recording was requested).
    pub path: Vec<BkrPairPoint>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub outcome: BkrOutcome,
    pub steps: u64,
    pub last: BkrPairPoint,
    pub labels: SwitchLabels,
    pub diagnostics: BkrDiagnostics,
}

impl BkrCouplingRun {
    /// `|X̂ - X̃| + |Ŷ - Ỹ|` at the end of the run (delayed runs only).
    pub fn gap(&self) -> Option<f64> {
        self.last
            .delayed
            .map(|d| (d.x - self.last.reference.x).abs() + (d.y - self.last.reference.y).abs())
    }

    /// Driver `x` along the recorded path.
    pub fn x_path(&self) -> Vec<f64> {
        self.path.iter().map(|p| p.driver.x).collect()
    }

    /// Switch-phase protection for the driver and the reference.
    pub fn protection_holds(&self) -> bool {
        let d: Vec<BkrState> = self.path.iter().map(|p| p.driver).collect();
        let r: Vec<BkrState> = self.path.iter().map(|p| p.reference).collect();
        protection_holds(&d, self.labels) && protection_holds(&r, self.labels)
    }

    /// Rows `t,x,y,k,x̃,ỹ`.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,x,y,k,x_tilde,y_tilde\n");
        for p in &self.path {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
                p.t, p.driver.x, p.driver.y, p.driver.k, p.reference.x, p.reference.y
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkrOptions {
    pub policy: StepPolicy,
    pub horizon: f64,
    pub max_steps: u64,
    pub record: bool,
    pub labels: SwitchLabels,
    /// Time to keep simulating the merged copies after coupling.
    pub after: f64,
}

impl BkrOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            policy: StepPolicy::adaptive(dt),
            horizon,
            max_steps: 100_000_000,
            record: false,
            labels: SwitchLabels::Consistent,
            after: 0.0,
        }
    }
}

/// Variant reflection/synchronized coupling `dÃ = sgn(Ỹ)·J·sgn(Y)·dA` with
/// `J = -1` until `X` meets `X̃`; records the path.
pub fn variant_coupling(rng: &mut RngStream, start: (f64, f64), start_tilde: (f64, f64), dt: f64) -> Result<BkrCouplingRun> {
    let mut opts = BkrOptions::new(dt, f64::INFINITY);
    opts.record = true;
    variant_coupling_with(rng, start, start_tilde, &opts)
}

pub fn variant_coupling_with(
    rng: &mut RngStream,
    start: (f64, f64),
    start_tilde: (f64, f64),
    opts: &BkrOptions,
) -> Result<BkrCouplingRun> {
    let d = BkrState::new(start.0, start.1, opts.labels)?;
    let r = BkrState::new(start_tilde.0, start_tilde.1, opts.labels)?;
    run_engine(rng, d, r, None, opts)
}

/// Delayed variant coupling `dÂ = sgn(Ŷ_σ)·J·sgn(Y_σ)·dA` of a copy started at
/// `start_hat`, alongside the undelayed reference started at the same point.
/// Refuses step floors above the kernel scale.
pub fn delayed_variant_coupling(
    rng: &mut RngStream,
    start: (f64, f64),
    start_hat: (f64, f64),
    eps: f64,
    dt: f64,
    horizon: f64,
) -> Result<BkrCouplingRun> {
    crate::delay::check_grid_resolves_kernel(eps, dt)?;
    let mut opts = BkrOptions::new(dt, horizon);
    opts.record = true;
    delayed_variant_coupling_with(rng, start, start_hat, &DelayKernel::new(eps)?, &opts)
}

pub fn delayed_variant_coupling_with(
    rng: &mut RngStream,
    start: (f64, f64),
    start_hat: (f64, f64),
    kernel: &DelayKernel,
    opts: &BkrOptions,
) -> Result<BkrCouplingRun> {
    let d = BkrState::new(start.0, start.1, opts.labels)?;
    let r = BkrState::new(start_hat.0, start_hat.1, opts.labels)?;
    run_engine(rng, d, r, Some((r, *kernel)), opts)
}

/// Continues a delayed variant coupling from given full states (switch values
/// included), as needed when restarting a staged coupling.
pub(crate) fn delayed_variant_from_states(
    rng: &mut RngStream,
    driver: BkrState,
    delayed: BkrState,
    kernel: &DelayKernel,
    opts: &BkrOptions,
) -> Result<BkrCouplingRun> {
    run_engine(rng, driver, delayed, Some((delayed, *kernel)), opts)
}

/// Reference path `X̃_t = (X̃_0 - (X_{t∧T1} - X_0)) + (X_{t∨T1} - X_{T1})`, with
/// `T1` the first grid index where `x_path` reaches `½(x0 + x̃0)`.
pub fn reconstruct_tilde_x(x_path: &[f64], x_tilde0: f64) -> Result<Vec<f64>> {
    let x0 = *x_path
        .first()
        .ok_or_else(|| Error::IncompletePath("empty path".into()))?;
    let m = 0.5 * (x0 + x_tilde0);
    let side = x0 - m;
    let k1 = x_path
        .iter()
        .position(|&x| (x - m) * side <= 0.0)
        .ok_or_else(|| Error::IncompletePath("the midpoint is never reached".into()))?;
    let x1 = x_path[k1];
    Ok(x_path
        .iter()
        .enumerate()
        .map(|(k, _)| (x_tilde0 - (x_path[k.min(k1)] - x0)) + (x_path[k.max(k1)] - x1))
        .collect())
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Reflect,
    Sync,
    Merged,
}

/// Shared stepping engine. Signs are taken at the start of each step; the
/// midpoint hit truncates its step so that `X` lands exactly on the midpoint,
/// after which `X̃ = X` bitwise. `T2` fires when, after `T1`, the order of `|Y|`
/// and `|Ỹ|` strictly reverses, both lie within `3√dt` of zero, or the larger
/// one crosses zero within a step while the two are within `3√dt`; the
/// reference is then merged into the driver.
fn run_engine(
    rng: &mut RngStream,
    mut d: BkrState,
    mut r: BkrState,
    delayed: Option<(BkrState, DelayKernel)>,
    opts: &BkrOptions,
) -> Result<BkrCouplingRun> {
    opts.policy.validate()?;
    if !(opts.horizon > 0.0) || !(opts.after >= 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let labels = opts.labels;
    let zero_tol = 3.0 * opts.policy.dt.sqrt();
    let (x0, xt0) = (d.x, r.x);
    let m = 0.5 * (d.x + r.x);
    let mut diag = BkrDiagnostics {
        max_reconstruction_error: 0.0,
        max_post_t1_gap: 0.0,
        domination_holds: true,
        t2_trigger: None,
    };
    let mut dom_sign = 0.0;
    let mut phase = if d.x == r.x { Phase::Sync } else { Phase::Reflect };
    let mut t1 = if phase == Phase::Sync { Some(0.0) } else { None };
    let mut t2 = None;
    let (mut dh, kernel) = match delayed {
        Some((s, k)) => (Some(s), Some(k)),
        None => (None, None),
    };
    // Sign history for the delayed copy: times and sgn(Y), sgn(Ŷ).
    let mut times = vec![0.0];
    let mut sy_hist = vec![sgn64(d.y)];
    let mut syh_hist = vec![dh.map(|s| sgn64(s.y)).unwrap_or(1.0)];
    let mut ptr = 0usize;

    let mut t = 0.0;
    let mut steps = 0u64;
    let mut path = Vec::new();
    let pt = |t, d, r, dh| BkrPairPoint {
        t,
        driver: d,
        reference: r,
        delayed: dh,
    };
    if opts.record {
        path.push(pt(t, d, r, dh));
    }
    let mut stop_at = opts.horizon;
    let outcome = loop {
        if phase == Phase::Merged && t >= stop_at {
            break BkrOutcome::Coupled;
        }
        if t >= stop_at {
            break BkrOutcome::Horizon;
        }
        if steps >= opts.max_steps {
            break BkrOutcome::StepCap;
        }
        let mut dist = [d.x.abs(), d.y.abs(), (d.x.abs() - d.h).abs(), (d.y.abs() - d.h).abs()]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        match phase {
            Phase::Reflect => dist = dist.min((d.x - m).abs()).min(r.y.abs()),
            Phase::Sync => dist = dist.min(r.y.abs()),
            Phase::Merged => {}
        }
        if let Some(s) = dh {
            dist = dist.min(s.x.abs()).min(s.y.abs());
        }
        let h = opts.policy.step(dist).min(stop_at - t);
        let t_next = t + h;
        if !(t_next > t) {
            return Err(Error::InvalidGrid(format!("step {h} does not advance time {t}")));
        }
        let mut da = h.sqrt() * rng.normal();
        if !da.is_finite() {
            return Err(Error::NumericFailure("non-finite BKR increment".into()));
        }
        let j = if phase == Phase::Reflect { -1.0 } else { 1.0 };
        let mut hit_t1 = false;
        if phase == Phase::Reflect {
            let x1 = d.x + sgn64(d.y) * da;
            if rng.uniform() <= crossing_probability(d.x, x1, m, h) {
                hit_t1 = true;
                da = sgn64(d.y) * (m - d.x);
            }
        }
        let (pd, pr, pdh) = (d, r, dh);
        // Delayed copy: signs read at the last grid time not after σ(t_next).
        if let (Some(s), Some(k)) = (dh.as_mut(), kernel.as_ref()) {
            let sig = k.sigma(t_next);
            while ptr + 1 < times.len() && times[ptr + 1] <= sig {
                ptr += 1;
            }
            s.apply(syh_hist[ptr] * j * sy_hist[ptr] * da);
        }
        let sy = sgn64(d.y);
        d.apply(da);
        if phase == Phase::Merged {
            r = d;
        } else {
            r.apply(sgn64(r.y) * j * sy * da);
            if phase == Phase::Reflect {
                // dX̃ = J·dX integrates to the mirror image of X before the hit.
                r.x = xt0 - (d.x - x0);
            }
        }
        if hit_t1 {
            d.x = m;
            r.x = m;
        }
        d.update_switch(&pd, h, labels, rng);
        if phase != Phase::Merged {
            r.update_switch(&pr, h, labels, rng);
        }
        if let (Some(s), Some(p)) = (dh.as_mut(), pdh) {
            s.update_switch(&p, h, labels, rng);
        }
        t = t_next;
        steps += 1;
        if kernel.is_some() {
            times.push(t);
            sy_hist.push(sgn64(d.y));
            syh_hist.push(dh.map(|s| sgn64(s.y)).unwrap_or(1.0));
        }
        if hit_t1 {
            t1 = Some(t);
            phase = Phase::Sync;
        } else if phase == Phase::Sync {
            let before = pd.y.abs() - pr.y.abs();
            let after = d.y.abs() - r.y.abs();
            let reversed = before * after < 0.0;
            let both_small = d.y.abs() <= zero_tol && r.y.abs() <= zero_tol;
            let (top0, top1) = if before >= 0.0 { (pd.y, d.y) } else { (pr.y, r.y) };
            let crossed = after.abs() <= zero_tol && rng.uniform() <= crossing_probability(top0, top1, 0.0, h);
            if reversed || both_small || crossed {
                diag.t2_trigger = Some(if reversed {
                    T2Trigger::Reversal
                } else if both_small {
                    T2Trigger::BothSmall
                } else {
                    T2Trigger::Crossing
                });
                r = d;
                t2 = Some(t);
                phase = Phase::Merged;
                stop_at = (t + opts.after).min(opts.horizon.max(t));
                if opts.after == 0.0 {
                    stop_at = t;
                }
            }
        }
        let rec = if t1.is_none() {
            xt0 - (d.x - x0)
        } else {
            (xt0 - (m - x0)) + (d.x - m)
        };
        diag.max_reconstruction_error = diag.max_reconstruction_error.max((r.x - rec).abs());
        if t1.is_some() {
            diag.max_post_t1_gap = diag.max_post_t1_gap.max((d.x - r.x).abs());
            let dd = d.y.abs() - r.y.abs();
            if dd != 0.0 {
                if dom_sign * dd < 0.0 {
                    diag.domination_holds = false;
                }
                dom_sign = dd.signum();
            }
        }
        if opts.record {
            path.push(pt(t, d, r, dh));
        }
    };
    let last = pt(t, d, r, dh);
    Ok(BkrCouplingRun {
        path,
        t1,
        t2,
        outcome,
        steps,
        last,
        labels,
        diagnostics: diag,
    })
}
