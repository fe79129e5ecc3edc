//! Reflection/synchronized coupling of two Brownian motions with local time,
//! in Lévy coordinates `(B, S)`.
//!
//! Stage 1 reflects (`dB̃ = -dB`) until `B` reaches the midpoint `m = ½(b0 + b̃0)`
//! at `T1`; stage 2 synchronizes (`dB̃ = dB`) until the common path reaches the
//! larger of the two suprema at `T2`, where all four coordinates coincide.

mod analytic;
mod estimators;

pub use analytic::{m1_tail, mgf_closed_form, mgf_integrand, mgf_quadrature, q_alpha, quadrant_phi, ClosedFormMgf};
pub use estimators::{
    crude_mgf, estimate_coupling_cdf, phi_drift, rao_blackwell_mgf, CdfPoint, MgfEstimate, QuadrantCoupling,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim_kernel::{bridge_maximum_from_uniform, crossing_probability, RngStream, StepPolicy};

/// Initial Lévy coordinates of the two copies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig<T = f64> {
    pub b0: T,
    pub s0: T,
    pub b_tilde0: T,
    pub s_tilde0: T,
}

impl<T: Real> CouplingConfig<T> {
    pub fn new(b0: T, s0: T, b_tilde0: T, s_tilde0: T) -> Result<Self> {
        let cfg = Self {
            b0,
            s0,
            b_tilde0,
            s_tilde0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.b0, self.s0, self.b_tilde0, self.s_tilde0].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter("coupling start must be finite".into()));
        }
        if !(self.s0 >= self.b0) || !(self.s_tilde0 >= self.b_tilde0) {
            return Err(Error::InvalidPair(format!(
                "each supremum must dominate its path: (b0, s0) = ({}, {}), (b̃0, s̃0) = ({}, {})",
                self.b0.as_f64(),
                self.s0.as_f64(),
                self.b_tilde0.as_f64(),
                self.s_tilde0.as_f64()
            )));
        }
        Ok(())
    }

    /// Swaps the copies if needed so that `b0 ≥ b̃0`.
    pub fn normalized(&self) -> Self {
        if self.b0 >= self.b_tilde0 {
            *self
        } else {
            Self {
                b0: self.b_tilde0,
                s0: self.s_tilde0,
                b_tilde0: self.b0,
                s_tilde0: self.s0,
            }
        }
    }

    /// Equal supremum floors (exact comparison of the configured values).
    pub fn is_singular(&self) -> bool {
        self.s0 == self.s_tilde0
    }

    /// Starts covered by the closed-form transform: `s0 = b0 > b̃0 = s̃0`.
    pub fn is_closed_form_case(&self) -> bool {
        let c = self.normalized();
        c.s0 == c.b0 && c.s_tilde0 == c.b_tilde0 && c.b0 > c.b_tilde0
    }

    pub fn midpoint(&self) -> T {
        T::c(0.5) * (self.b0 + self.b_tilde0)
    }
}

/// Coupling control: `-1` strictly before `t1`, `+1` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingControl {
    pub t1: f64,
}

impl CouplingControl {
    pub fn j(&self, t: f64) -> f64 {
        if t < self.t1 {
            -1.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingOutcome {
    CoupledAtT1,
    CoupledAtT2,
    Truncated,
}

/// One recorded grid point of a coupling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingPoint {
    pub t: f64,
    pub b: f64,
    pub s: f64,
    pub b_tilde: f64,
    pub s_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRun {
    /// Recorded grid (empty unless recording was requested).
    pub path: Vec<CouplingPoint>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub t_couple: Option<f64>,
    /// Running maximum of `b` over `[0, T1]`.
    pub m1: f64,
    pub outcome: CouplingOutcome,
    pub steps: u64,
    /// State at the end of the run (merged if coupled).
    pub last: CouplingPoint,
    /// True when the run stopped at the time horizon (rather than the step cap).
    pub hit_horizon: bool,
}

impl CouplingRun {
    pub fn control(&self) -> Option<CouplingControl> {
        self.t1.map(|t1| CouplingControl { t1 })
    }
}

/// Engine settings for [`run_reflection_sync_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub policy: StepPolicy,
    pub horizon: f64,
    pub max_steps: u64,
    pub record: bool,
    pub stop_after_t1: bool,
}

impl RunOptions {
    pub fn new(policy: StepPolicy) -> Self {
        Self {
            policy,
            horizon: f64::INFINITY,
            max_steps: 50_000_000,
            record: false,
            stop_after_t1: false,
        }
    }
}

/// Runs the coupling with an adaptive step policy (base step `dt`), recording the path.
pub fn run_reflection_sync(rng: &mut RngStream, cfg: &CouplingConfig, dt: f64) -> Result<CouplingRun> {
    let mut opts = RunOptions::new(StepPolicy::adaptive(dt));
    opts.record = true;
    run_reflection_sync_with(rng, cfg, &opts)
}

/// Inverse-CDF draw of a bridge minimum from uniform `u`; `u < P(min ≤ level)`
/// exactly when the returned minimum is at or below `level`.
#[inline]
fn bridge_minimum_from_uniform(x0: f64, x1: f64, h: f64, u: f64) -> f64 {
    -bridge_maximum_from_uniform(-x0, -x1, h, u)
}

/// Coupling engine. Sub-step hits use `crossing_probability`; the event time is
/// the right endpoint of the step in which the hit fires, where the position is
/// set to the target level.
pub fn run_reflection_sync_with(rng: &mut RngStream, cfg: &CouplingConfig, opts: &RunOptions) -> Result<CouplingRun> {
    cfg.validate()?;
    opts.policy.validate()?;
    let c = cfg.normalized();
    let m = c.midpoint();
    let mut t = 0.0;
    let mut steps: u64 = 0;
    let mut p = CouplingPoint {
        t,
        b: c.b0,
        s: c.s0,
        b_tilde: c.b_tilde0,
        s_tilde: c.s_tilde0,
    };
    let mut path = Vec::new();
    if opts.record {
        path.push(p);
    }
    let mut m1 = c.b0;

    let truncated = |p: CouplingPoint, path: Vec<CouplingPoint>, t1, m1, steps, at_horizon| CouplingRun {
        path,
        t1,
        t2: None,
        t_couple: None,
        m1,
        outcome: CouplingOutcome::Truncated,
        steps,
        last: p,
        hit_horizon: at_horizon,
    };

    // Stage 1: reflection until B reaches the midpoint.
    if c.b0 > c.b_tilde0 {
        loop {
            if t >= opts.horizon || steps >= opts.max_steps {
                return Ok(truncated(p, path, None, m1, steps, t >= opts.horizon));
            }
            let h = opts.policy.step(p.b - m).min(opts.horizon - t);
            let b1 = p.b + h.sqrt() * rng.normal();
            if !b1.is_finite() {
                return Err(Error::NumericFailure("non-finite increment in reflection stage".into()));
            }
            let u_hit = rng.uniform();
            let u_max = rng.uniform();
            let hit = u_hit <= crossing_probability(p.b, b1, m, h);
            let end = if hit { m } else { b1 };
            let low = if hit { m } else { bridge_minimum_from_uniform(p.b, b1, h, u_hit) };
            let high = bridge_maximum_from_uniform(p.b, end, h, u_max);
            m1 = m1.max(high);
            steps += 1;
            t += h;
            p = CouplingPoint {
                t,
                b: end,
                s: p.s.max(high),
                b_tilde: 2.0 * m - end,
                s_tilde: p.s_tilde.max(2.0 * m - low),
            };
            if opts.record {
                path.push(p);
            }
            if hit {
                break;
            }
        }
    }
    let t1 = t;
    // Exact equality of the configured floors selects the singular case.
    if c.is_singular() && m1 <= c.s0 {
        p.b_tilde = p.b;
        p.s_tilde = p.s;
        if let Some(last) = path.last_mut() {
            *last = p;
        }
        return Ok(CouplingRun {
            path,
            t1: Some(t1),
            t2: Some(t1),
            t_couple: Some(t1),
            m1,
            outcome: CouplingOutcome::CoupledAtT1,
            steps,
            last: p,
            hit_horizon: false,
        });
    }
    if opts.stop_after_t1 {
        return Ok(CouplingRun {
            path,
            t1: Some(t1),
            t2: None,
            t_couple: None,
            m1,
            outcome: CouplingOutcome::Truncated,
            steps,
            last: p,
            hit_horizon: false,
        });
    }

    // Stage 2: synchronized motion until the common path reaches the larger supremum.
    let level = p.s.max(p.s_tilde);
    while p.b < level {
        if t >= opts.horizon || steps >= opts.max_steps {
            return Ok(truncated(p, path, Some(t1), m1, steps, t >= opts.horizon));
        }
        let h = opts.policy.step(level - p.b).min(opts.horizon - t);
        let b1 = p.b + h.sqrt() * rng.normal();
        if !b1.is_finite() {
            return Err(Error::NumericFailure("non-finite increment in synchronized stage".into()));
        }
        let high = bridge_maximum_from_uniform(p.b, b1, h, rng.uniform());
        let hit = high >= level;
        steps += 1;
        t += h;
        let (b, top) = if hit { (level, level) } else { (b1, high) };
        p = CouplingPoint {
            t,
            b,
            s: p.s.max(top),
            b_tilde: b,
            s_tilde: p.s_tilde.max(top),
        };
        if opts.record {
            path.push(p);
        }
    }
    // Merge: all four coordinates coincide at the level.
    p.b = level;
    p.s = level;
    p.b_tilde = level;
    p.s_tilde = level;
    if let Some(last) = path.last_mut() {
        *last = p;
    }
    Ok(CouplingRun {
        path,
        t1: Some(t1),
        t2: Some(t),
        t_couple: Some(t),
        m1,
        outcome: CouplingOutcome::CoupledAtT2,
        steps,
        last: p,
        hit_horizon: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_and_normalization() {
        assert!(CouplingConfig::new(1.0, 0.5, 0.0, 0.0).is_err());
        let c = CouplingConfig::new(0.0, 0.0, 1.0, 1.0).unwrap().normalized();
        assert_eq!((c.b0, c.b_tilde0), (1.0, 0.0));
        assert!(CouplingConfig::new(1.0, 1.0, 0.0, 0.0).unwrap().is_closed_form_case());
        assert!(CouplingConfig::new(1.0, 2.0, 0.0, 2.0).unwrap().is_singular());
    }

    #[test]
    fn control_switches_once() {
        let c = CouplingControl { t1: 0.5 };
        assert_eq!(c.j(0.49), -1.0);
        assert_eq!(c.j(0.5), 1.0);
        assert_eq!(c.j(3.0), 1.0);
    }

    #[test]
    fn coupled_state_is_merged() {
        let cfg = CouplingConfig::new(1.0, 1.0, 0.0, 0.0).unwrap();
        for i in 0..50 {
            let mut rng = RngStream::new(9, i);
            let run = run_reflection_sync(&mut rng, &cfg, 1e-3).unwrap();
            assert_eq!(run.outcome, CouplingOutcome::CoupledAtT2);
            let l = run.last;
            assert!(l.b == l.s && l.s == l.b_tilde && l.b_tilde == l.s_tilde);
            assert!(l.b >= 1.0);
            assert!(run.t1.unwrap() <= run.t2.unwrap());
            for q in &run.path {
                assert!(q.b_tilde <= q.b);
                assert!(q.s >= q.b && q.s_tilde >= q.b_tilde);
            }
        }
    }

    #[test]
    fn horizon_truncates() {
        let cfg = CouplingConfig::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let mut opts = RunOptions::new(StepPolicy::uniform(1e-3));
        opts.horizon = 1e-3;
        let run = run_reflection_sync_with(&mut RngStream::new(1, 1), &cfg, &opts).unwrap();
        assert_eq!(run.outcome, CouplingOutcome::Truncated);
        assert!(run.hit_horizon);
    }
}
