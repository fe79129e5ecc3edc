use serde::{Deserialize, Serialize};

use super::kernel::DelayKernel;
use crate::error::{Error, Result};
use crate::levy::DiffusionState;
use crate::scalar::sgn64;
use crate::sim_kernel::{bridge_maximum_from_uniform, crossing_probability, RngStream, StepPolicy};

/// Recorded grid point of a delayed run. `b = l - |x|` for each copy; `b_tilde` is
/// the undelayed reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub t: f64,
    pub x: f64,
    pub l: f64,
    pub x_hat: f64,
    pub l_hat: f64,
    pub b_tilde: f64,
}

impl DelayPoint {
    pub fn b(&self) -> f64 {
        self.l - self.x.abs()
    }

    pub fn b_hat(&self) -> f64 {
        self.l_hat - self.x_hat.abs()
    }

    /// `||X̂| - |X|| + |L̂ - L|`.
    pub fn gap(&self) -> f64 {
        (self.x_hat.abs() - self.x.abs()).abs() + (self.l_hat - self.l).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelayOutcome {
    /// The driver reached the synchronization level: the reference has coupled.
    Coupled,
    Horizon,
    StepCap,
    /// A localization guard was crossed.
    Guard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedRun {
    /// Recorded grid (empty unless recording was requested).
    pub path: Vec<DelayPoint>,
    /// Switch time of the control `J` (reflection → synchronization).
    pub t1: Option<f64>,
    /// Coupling time of the reference with the driver.
    pub t2: Option<f64>,
    pub outcome: DelayOutcome,
    /// `max_k |B̂_k - B̃_k|` over the simulated grid.
    pub sup_distance: f64,
    pub steps: u64,
    pub last: DelayPoint,
    /// `(k, j)` pairs: the increment of step `k` consumed the signs stored at grid index `j`.
    pub access_log: Vec<(u64, u64)>,
}

impl DelayedRun {
    pub fn gap(&self) -> f64 {
        self.last.gap()
    }
}

/// Stops the run when `B` or `B̂` drops below the given levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationGuard {
    pub b_min: f64,
    pub b_hat_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOptions {
    pub policy: StepPolicy,
    pub horizon: f64,
    pub max_steps: u64,
    pub record: bool,
    pub access_log: bool,
    pub guard: Option<LocalizationGuard>,
}

impl DelayOptions {
    pub fn new(policy: StepPolicy, horizon: f64) -> Self {
        Self {
            policy,
            horizon,
            max_steps: 200_000_000,
            record: false,
            access_log: false,
            guard: None,
        }
    }
}

/// Solves the delayed coupling on a uniform grid of step `dt`, recording the path.
/// Refuses grids whose step exceeds the kernel scale `ε` (the kernel's knot would
/// fall inside the first step).
pub fn solve_delayed_coupling(
    rng: &mut RngStream,
    start: DiffusionState,
    start_hat: DiffusionState,
    eps: f64,
    dt: f64,
    horizon: f64,
) -> Result<DelayedRun> {
    check_grid_resolves_kernel(eps, dt)?;
    let mut opts = DelayOptions::new(StepPolicy::uniform(dt), horizon);
    opts.record = true;
    solve_delayed_coupling_with(rng, start, start_hat, &DelayKernel::new(eps)?, &opts)
}

pub(crate) fn check_grid_resolves_kernel(eps: f64, dt: f64) -> Result<()> {
    if !(dt <= eps) {
        return Err(Error::InvalidGrid(format!("step {dt} exceeds the kernel scale {eps}")));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Reflect,
    Sync,
}

fn validate_state(s: &DiffusionState, name: &str) -> Result<()> {
    if !(s.x.is_finite() && s.l.is_finite() && s.l >= 0.0) {
        return Err(Error::InvalidState(format!("{name}: need finite x and l ≥ 0, got ({}, {})", s.x, s.l)));
    }
    Ok(())
}

/// Explicit scheme for the delayed equation
/// `ΔX̂_k = sgn(X̂_j)·J_k·sgn(X_j)·ΔX_k`, `j` the last grid index with `t_j ≤ σ(t_k)`.
///
/// `X` is the driving Brownian motion. Local times follow the discrete Tanaka
/// identity `L_k = L_{k-1} + |X_k| - |X_{k-1}| - sgn(X_{k-1})ΔX_k`, so
/// `B = L - |X|` has increments `-sgn(X_{k-1})ΔX_k` and `L ≥ B` always.
///
/// The control `J` is `-1` until `B` reaches the midpoint `m` of `B_0` and
/// `B̂_0` (time `T1`, detected with a bridge test), then `+1` until `B` reaches
/// `max(L_{T1}, S̃_{T1})` (time `T2`), where the reference `B̃` (started at
/// `B̂_0`, increments `J·ΔB`) has coupled with `B`. The step in which `T1` falls
/// is split at the hitting point, so `B̃` equals `B` exactly after `T1`.
pub fn solve_delayed_coupling_with(
    rng: &mut RngStream,
    start: DiffusionState,
    start_hat: DiffusionState,
    kernel: &DelayKernel,
    opts: &DelayOptions,
) -> Result<DelayedRun> {
    validate_state(&start, "start")?;
    validate_state(&start_hat, "delayed start")?;
    opts.policy.validate()?;
    if !(opts.horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", opts.horizon)));
    }

    let (mut x, mut l) = (start.x, start.l);
    let (mut xh, mut lh) = (start_hat.x, start_hat.l);
    let mut b = l - x.abs();
    let b_hat0 = lh - xh.abs();
    let mut bt = b_hat0;
    let mut st = lh; // supremum floor of the reference, tracked through stage 1
    let m = 0.5 * (b + b_hat0);
    let mut phase = if b == bt { Phase::Sync } else { Phase::Reflect };
    let mut t1 = if phase == Phase::Sync { Some(0.0) } else { None };
    let mut level = l.max(st);

    let mut t = 0.0;
    let mut steps: u64 = 0;
    let mut times = vec![0.0];
    let mut signs_x = vec![sgn64(x)];
    let mut signs_xh = vec![sgn64(xh)];
    let mut ptr = 0usize;
    let mut sup = (lh - xh.abs() - bt).abs();
    let mut path = Vec::new();
    let mut access_log = Vec::new();
    let point = |t, x, l, xh, lh, bt| DelayPoint {
        t,
        x,
        l,
        x_hat: xh,
        l_hat: lh,
        b_tilde: bt,
    };
    if opts.record {
        path.push(point(t, x, l, xh, lh, bt));
    }

    let outcome = loop {
        if phase == Phase::Sync && b >= level {
            break DelayOutcome::Coupled;
        }
        if let Some(g) = opts.guard {
            if b < g.b_min || lh - xh.abs() < g.b_hat_min {
                break DelayOutcome::Guard;
            }
        }
        if t >= opts.horizon {
            break DelayOutcome::Horizon;
        }
        if steps >= opts.max_steps {
            break DelayOutcome::StepCap;
        }
        let dist = match phase {
            Phase::Reflect => (b - m).abs(),
            Phase::Sync => level - b,
        };
        let h = opts.policy.step(dist).min(opts.horizon - t);
        let t_next = t + h;
        let s = kernel.sigma(t_next);
        while ptr + 1 < times.len() && times[ptr + 1] <= s {
            ptr += 1;
        }
        if !(t_next > t) {
            return Err(Error::InvalidGrid(format!("step {h} does not advance time {t}")));
        }
        if opts.access_log {
            access_log.push((steps + 1, ptr as u64));
        }
        let c = signs_xh[ptr] * signs_x[ptr];

        let dx = h.sqrt() * rng.normal();
        if !dx.is_finite() {
            return Err(Error::NumericFailure("non-finite increment in delayed solver".into()));
        }
        let db = -sgn64(x) * dx;
        let b1 = b + db;
        let u = rng.uniform();
        let dxh;
        let mut hit_t2 = false;
        match phase {
            Phase::Reflect => {
                let hit = u <= crossing_probability(b, b1, m, h);
                if hit {
                    // Split the step at the hitting point: J = -1 before, +1 after.
                    let dx_pre = -sgn64(x) * (m - b);
                    dxh = c * (-dx_pre + (dx - dx_pre));
                    bt = b1;
                    st = st.max(m);
                    t1 = Some(t_next);
                    phase = Phase::Sync;
                } else {
                    dxh = -c * dx;
                    if b < m {
                        // The reference moves down from above: track its running maximum
                        // through the minimum of B on this step.
                        let low = -bridge_maximum_from_uniform(-b, -b1, h, rng.uniform());
                        st = st.max(2.0 * m - low);
                    }
                    bt -= db;
                    st = st.max(bt);
                }
            }
            Phase::Sync => {
                dxh = c * dx;
                bt += db;
                hit_t2 = u <= crossing_probability(b, b1, level, h);
            }
        }
        let x1 = x + dx;
        l += x1.abs() - x.abs() - sgn64(x) * dx;
        x = x1;
        b = l - x.abs();
        let xh1 = xh + dxh;
        lh += xh1.abs() - xh.abs() - sgn64(xh) * dxh;
        xh = xh1;
        if t1 == Some(t_next) {
            level = l.max(st);
        }
        t = t_next;
        steps += 1;
        times.push(t);
        signs_x.push(sgn64(x));
        signs_xh.push(sgn64(xh));
        sup = sup.max((lh - xh.abs() - bt).abs());
        if opts.record {
            path.push(point(t, x, l, xh, lh, bt));
        }
        if hit_t2 {
            break DelayOutcome::Coupled;
        }
    };
    let t2 = (outcome == DelayOutcome::Coupled).then_some(t);
    Ok(DelayedRun {
        path,
        t1,
        t2,
        outcome,
        sup_distance: sup,
        steps,
        last: point(t, x, l, xh, lh, bt),
        access_log,
    })
}
