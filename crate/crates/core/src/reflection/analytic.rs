//! Closed-form quantities for the reflection/synchronized coupling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_upper, QuadOptions, Quadrature};
use crate::scalar::Real;

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {}", v.as_f64())))
    }
}

/// `P(M1 ≥ B0 + a)`: the maximum before reaching the midpoint (distance `b` below)
/// exceeds the start by `a`. Gambler's ruin gives `b/(a+b)`.
pub fn m1_tail<T: Real>(a: T, b: T) -> Result<T> {
    positive("a", a)?;
    positive("b", b)?;
    Ok(b / (a + b))
}

/// `E[exp(-α T1); M1 < B0 + a] = sinh(α* a)/sinh(α* (a+b))` with `α* = √(2α)`,
/// evaluated as `e^{-α* b}·expm1(-2α* a)/expm1(-2α* (a+b))`, which cannot overflow.
pub fn q_alpha<T: Real>(a: T, b: T, alpha: T) -> Result<T> {
    positive("a", a)?;
    positive("b", b)?;
    positive("alpha", alpha)?;
    let k = (T::c(2.0) * alpha).sqrt();
    let two = T::c(2.0);
    let v = (-k * b).exp() * (-two * k * a).exp_m1() / (-two * k * (a + b)).exp_m1();
    if !v.is_finite() {
        return Err(Error::NumericFailure(format!(
            "q_alpha not finite at a = {}, b = {}, alpha = {}",
            a.as_f64(),
            b.as_f64(),
            alpha.as_f64()
        )));
    }
    Ok(v)
}

/// Closed-form coupling-time transform with its underflow flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormMgf<T = f64> {
    pub value: T,
    /// Set when `α*·gap/2 > 30`; `value` is then reported as 0.
    pub underflow: bool,
}

/// `E[exp(-α T_couple)] = 1 + sinh(x)·log tanh(x/2)` with `x = √(2α)·gap/2`, for
/// starts with `s0 = b0`, `s̃0 = b̃0` and `gap = b0 - b̃0`.
///
/// With `u = e^{-x}` the expression equals `1 - (1-u²)·artanh(u)/u`; for small `u`
/// the cancellation is avoided through the series `Σ_{k≥1} 2u^{2k}/((2k-1)(2k+1))`.
pub fn mgf_closed_form<T: Real>(gap: T, alpha: T) -> Result<ClosedFormMgf<T>> {
    positive("gap", gap)?;
    positive("alpha", alpha)?;
    let x = (T::c(2.0) * alpha).sqrt() * gap / T::c(2.0);
    if !x.is_finite() {
        return Err(Error::NumericFailure("transform argument overflowed".into()));
    }
    if x > T::c(30.0) {
        return Ok(ClosedFormMgf {
            value: T::zero(),
            underflow: true,
        });
    }
    let u = (-x).exp();
    let value = if u < T::c(0.5) {
        let u2 = u * u;
        let mut term = u2;
        let mut sum = T::zero();
        let mut k = 1;
        loop {
            let kk = T::c((2 * k) as f64);
            let add = T::c(2.0) * term / ((kk - T::one()) * (kk + T::one()));
            sum = sum + add;
            if add <= sum * T::epsilon() * T::c(0.25) || k > 200 {
                break;
            }
            term = term * u2;
            k += 1;
        }
        sum
    } else {
        // artanh(u)/u with 1 - u² = -expm1(-2x) computed without cancellation.
        let one_minus_u2 = -(-T::c(2.0) * x).exp_m1();
        let artanh = T::c(0.5) * ((T::one() + u) / (T::one() - u)).ln();
        T::one() - one_minus_u2 * artanh / u
    };
    Ok(ClosedFormMgf { value, underflow: false })
}

/// Integrand of [`mgf_quadrature`] at offset `a ≥ 0`:
/// `α*·sinh(α* b)·e^{-α*(a+b)}/sinh²(α*(a+b))`, computed in exponential form.
pub fn mgf_integrand<T: Real>(a: T, b: T, alpha: T) -> T {
    let k = (T::c(2.0) * alpha).sqrt();
    let e = (-T::c(2.0) * k * b).exp();
    let one_minus_e = -(-T::c(2.0) * k * b).exp_m1();
    // sinh(kb)·e^{-kv}/sinh²(kv) = 2(1 - e^{-2kb})e^{-2kb}·e^{-3ka}/(1 - e^{-2kv})², v = a + b.
    let denom = -(-T::c(2.0) * k * (a + b)).exp_m1();
    k * T::c(2.0) * one_minus_e * e * (-T::c(3.0) * k * a).exp() / (denom * denom)
}

/// Quadrature evaluation of the coupling-time transform from the excursion
/// decomposition, with half-gap `b`. Independent of [`mgf_closed_form`].
pub fn mgf_quadrature<T: Real>(b: T, alpha: T) -> Result<Quadrature<T>> {
    positive("b", b)?;
    positive("alpha", alpha)?;
    let k = (T::c(2.0) * alpha).sqrt();
    // Integrate in the scaled variable w = α* a so the tail scale is fixed.
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: if T::epsilon() < T::c(1e-10) { 1e-12 } else { 1e-5 },
        max_intervals: 4000,
    };
    let q = integrate_upper(|w: T| mgf_integrand(w / k, b, alpha) / k, T::zero(), &opts)?;
    Ok(q)
}

/// Quadrant-coupling diagnostic `Φ(u, v) = min(u, v)/(½(u + v))`.
pub fn quadrant_phi<T: Real>(u: T, v: T) -> Result<T> {
    if !(u >= T::zero() && v >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "quadrant coordinates must be nonnegative, got ({}, {})",
            u.as_f64(),
            v.as_f64()
        )));
    }
    if u + v == T::zero() {
        return Err(Error::UndefinedAtCorner);
    }
    Ok(u.min(v) / (T::c(0.5) * (u + v)))
}
