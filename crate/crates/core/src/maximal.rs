//! Reflection-principle law of `(B_t, S_t)` and the maximal-coupling overlap.
//!
//! Starting from `(b0, s0)`, the law of `(B_t, S_t)` has a continuous part on
//! `{s > s0, b ≤ s}` and, when `s0 > b0`, an atom of `S_t` at `s0` carrying the
//! killed Gaussian density of `B_t` on `{b ≤ s0}`. The maximal coupling succeeds
//! by time `t` with probability equal to the mass of the minimum of two such laws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_upper, QuadOptions};
use crate::reflection::CouplingConfig;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedJointLaw<T = f64> {
    pub b0: T,
    pub s0: T,
    pub t: T,
}

impl<T: Real> ShiftedJointLaw<T> {
    pub fn new(b0: T, s0: T, t: T) -> Result<Self> {
        if !(t > T::zero()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", t.as_f64())));
        }
        if !(s0 >= b0) {
            return Err(Error::InvalidPair(format!("s0 = {} below b0 = {}", s0.as_f64(), b0.as_f64())));
        }
        Ok(Self { b0, s0, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapResult<T = f64> {
    pub t: T,
    pub coupling_prob: T,
    pub tv: T,
    pub quadrature_error: T,
}

fn normal_pdf<T: Real>(z: T) -> T {
    (-z * z / T::c(2.0)).exp() / (T::c(2.0) * T::PI()).sqrt()
}

/// Continuous density of `(B_t, S_t)` at `(b, s)`; zero off `{s > s0, b ≤ s}`.
pub fn joint_density<T: Real>(b: T, s: T, law: &ShiftedJointLaw<T>) -> T {
    if !(s > law.s0) || b > s {
        return T::zero();
    }
    let t = law.t;
    let z = T::c(2.0) * (s - law.b0) - (b - law.b0);
    (T::c(2.0) / (T::PI() * t)).sqrt() * z / t * (-z * z / (T::c(2.0) * t)).exp()
}

/// Sub-density of `B_t` on the event that `S_t = s0` (the path stayed below its floor).
pub fn line_mass_density<T: Real>(b: T, law: &ShiftedJointLaw<T>) -> T {
    if !(law.s0 > law.b0) || b > law.s0 {
        return T::zero();
    }
    let rt = law.t.sqrt();
    let v = (normal_pdf((b - law.b0) / rt) - normal_pdf((T::c(2.0) * law.s0 - law.b0 - b) / rt)) / rt;
    v.max(T::zero())
}

fn inner_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_intervals: 400,
    }
}

fn outer_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-10,
        max_intervals: 400,
    }
}

/// `∫_{s > s_min} ∫_{b ≤ s} g(b, s) db ds` with both semi-infinite ranges mapped by
/// `x = x_0 ± scale·(1-u)/u`.
fn continuous_integral<T: Real, G: Fn(T, T) -> T>(g: G, s_min: T, scale: T) -> Result<(T, T)> {
    let mut inner_failure: Option<Error> = None;
    let mut inner_err = T::zero();
    let outer = integrate_upper(
        |w: T| {
            let s = s_min + scale * w;
            match integrate_upper(|y: T| g(s - scale * y, s), T::zero(), &inner_opts()) {
                Ok(q) => {
                    inner_err = inner_err.max(q.error);
                    q.value * scale * scale
                }
                Err(e) => {
                    inner_failure.get_or_insert(e);
                    T::zero()
                }
            }
        },
        T::zero(),
        &outer_opts(),
    )?;
    if let Some(e) = inner_failure {
        return Err(e);
    }
    Ok((outer.value, outer.error + inner_err * scale))
}

/// Mass of the continuous part plus the line mass (should be 1).
pub fn total_mass<T: Real>(law: &ShiftedJointLaw<T>) -> Result<(T, T)> {
    let scale = law.t.sqrt();
    let (cont, e1) = continuous_integral(|b, s| joint_density(b, s, law), law.s0, scale)?;
    let (line, e2) = line_integral(|b| line_mass_density(b, law), law.s0, scale)?;
    Ok((cont + line, e1 + e2))
}

fn line_integral<T: Real, G: Fn(T) -> T>(g: G, top: T, scale: T) -> Result<(T, T)> {
    let q = integrate_upper(|y: T| g(top - scale * y) * scale, T::zero(), &inner_opts())?;
    Ok((q.value, q.error))
}

/// Mass of `min(f, f̃)` for the time-`t` laws of the two copies in `cfg`.
pub fn overlap_integral<T: Real>(cfg: &CouplingConfig<T>, t: T) -> Result<OverlapResult<T>> {
    cfg.validate()?;
    let l1 = ShiftedJointLaw::new(cfg.b0, cfg.s0, t)?;
    let l2 = ShiftedJointLaw::new(cfg.b_tilde0, cfg.s_tilde0, t)?;
    let s_min = cfg.s0.max(cfg.s_tilde0);
    let scale = t.sqrt();
    let (mut prob, mut err) = continuous_integral(
        |b, s| joint_density(b, s, &l1).min(joint_density(b, s, &l2)),
        s_min,
        scale,
    )?;
    if cfg.s0 == cfg.s_tilde0 {
        let (line, e) = line_integral(
            |b| line_mass_density(b, &l1).min(line_mass_density(b, &l2)),
            cfg.s0,
            scale,
        )?;
        prob = prob + line;
        err = err + e;
    }
    let prob = prob.max(T::zero()).min(T::one());
    Ok(OverlapResult {
        t,
        coupling_prob: prob,
        tv: T::one() - prob,
        quadrature_error: err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalMgf<T = f64> {
    pub value: T,
    pub error: T,
    /// Overlap values on the evaluation grid (for plotting and monotonicity checks).
    pub curve: Vec<OverlapResult<T>>,
}

const POINTS_PER_DECADE: usize = 32;
const T_START: f64 = 1e-3;

/// `α ∫_0^∞ e^{-αt} P(T_max ≤ t) dt` where `P(T_max ≤ t)` is the overlap mass.
///
/// The overlap is evaluated on a geometric grid from `t = 10⁻³` until it exceeds
/// `1 - 10⁻⁶` or the discount falls below `10⁻¹²`; the integral is taken with
/// Simpson's rule in `ln t`, and its error combines the Simpson/half-grid
/// difference, the pointwise quadrature errors and the truncated tail.
pub fn maximal_mgf<T: Real>(cfg: &CouplingConfig<T>, alpha: T) -> Result<MaximalMgf<T>> {
    cfg.validate()?;
    if !(alpha > T::zero() && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", alpha.as_f64())));
    }
    let alpha64 = alpha.as_f64();
    let t_discount = (1e12f64).ln() / alpha64;
    // Evaluate in decade-sized chunks until a stopping rule fires.
    let ratio = 10f64.powf(1.0 / POINTS_PER_DECADE as f64);
    let mut curve: Vec<OverlapResult<T>> = Vec::new();
    let mut decade = 0usize;
    let mut saturated = false;
    loop {
        let base = curve.len();
        let chunk: Vec<f64> = (0..POINTS_PER_DECADE)
            .map(|i| T_START * ratio.powi((base + i) as i32))
            .collect();
        let results: Vec<Result<OverlapResult<T>>> = chunk.par_iter().map(|&t| overlap_integral(cfg, T::c(t))).collect();
        for r in results {
            curve.push(r?);
        }
        decade += 1;
        let last = curve.last().map(|c| c.coupling_prob.as_f64()).unwrap_or(0.0);
        let t_last = T_START * ratio.powi((curve.len() - 1) as i32);
        if last >= 1.0 - 1e-6 {
            saturated = true;
        }
        if saturated || t_last >= t_discount || decade > 40 {
            break;
        }
    }
    // Simpson's rule on the full and the half grid needs n - 1 divisible by 4.
    while curve.len() > 5 && (curve.len() - 1) % 4 != 0 {
        curve.pop();
    }
    for w in curve.windows(2) {
        let tol = w[0].quadrature_error + w[1].quadrature_error + T::c(1e-9);
        if w[1].coupling_prob < w[0].coupling_prob - tol {
            return Err(Error::MonotonicityViolation(format!(
                "overlap decreases from {} to {} between t = {} and t = {}",
                w[0].coupling_prob.as_f64(),
                w[1].coupling_prob.as_f64(),
                w[0].t.as_f64(),
                w[1].t.as_f64()
            )));
        }
    }
    let n = curve.len();
    let h = ratio.ln();
    let g: Vec<f64> = curve
        .iter()
        .map(|c| {
            let t = c.t.as_f64();
            alpha64 * t * (-alpha64 * t).exp() * c.coupling_prob.as_f64()
        })
        .collect();
    let simpson = |step: usize| -> f64 {
        let idx: Vec<usize> = (0..n).step_by(step).collect();
        let m = idx.len();
        let mut s = g[idx[0]] + g[idx[m - 1]];
        for (j, &i) in idx.iter().enumerate().take(m - 1).skip(1) {
            s += if j % 2 == 1 { 4.0 * g[i] } else { 2.0 * g[i] };
        }
        s * h * step as f64 / 3.0
    };
    let fine = simpson(1);
    let coarse = simpson(2);
    // Head on (0, t_start]: the overlap is increasing, so it is bounded by its value there.
    let t0 = T_START;
    let head = 0.5 * alpha64 * t0 * curve[0].coupling_prob.as_f64();
    let head_err = head;
    let t_end = curve[n - 1].t.as_f64();
    let tail_weight = (-alpha64 * t_end).exp();
    // Beyond the grid the overlap lies between its last value and 1.
    let cp_end = curve[n - 1].coupling_prob.as_f64();
    let tail = 0.5 * tail_weight * (1.0 + cp_end);
    let tail_err = 0.5 * tail_weight * (1.0 - cp_end);
    let point_err = curve.iter().map(|c| c.quadrature_error.as_f64()).fold(0.0, f64::max);
    let value = fine + head + tail;
    let error = (fine - coarse).abs() + head_err + tail_err + point_err;
    Ok(MaximalMgf {
        value: T::c(value),
        error: T::c(error),
        curve,
    })
}

/// Overlap evaluated at each time in `ts` (in parallel).
pub fn overlap_curve<T: Real>(cfg: &CouplingConfig<T>, ts: &[T]) -> Result<Vec<OverlapResult<T>>> {
    ts.par_iter().map(|&t| overlap_integral(cfg, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_support() {
        let law = ShiftedJointLaw::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(joint_density(1.0, 0.5, &law), 0.0);
        assert_eq!(joint_density(-1.0, -0.5, &law), 0.0);
        assert!(joint_density(0.0, 0.5, &law) > 0.0);
    }

    #[test]
    fn line_mass_cases() {
        let flat = ShiftedJointLaw::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(line_mass_density(0.3, &flat), 0.0);
        let law = ShiftedJointLaw::new(0.0, 1.0, 1.0).unwrap();
        assert!(line_mass_density(1.0_f64, &law).abs() < 1e-16);
        assert!(line_mass_density(0.0, &law) > 0.0);
    }

    #[test]
    fn identical_laws_overlap_fully() {
        let cfg = CouplingConfig::new(0.0, 0.5, 0.0, 0.5).unwrap();
        let r = overlap_integral(&cfg, 1.0).unwrap();
        assert!((r.coupling_prob - 1.0_f64).abs() < 1e-6);
        assert_eq!(r.coupling_prob + r.tv, 1.0);
    }
}
