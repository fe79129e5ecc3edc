use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_upper, QuadOptions};
use crate::scalar::Real;
use crate::sim_kernel::RngStream;
use crate::stats::{replicate_map, MeanSe};

/// Delay kernel `ψ(t) = ε³` on `[0, ε)` and `ε³/(t - ε + 1)³` afterwards, with the
/// delayed clock `σ(t) = t - min(ψ(t), t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayKernel<T = f64> {
    pub epsilon: T,
}

impl<T: Real> DelayKernel<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon < T::c(0.5)) {
            return Err(Error::InvalidParameter(format!(
                "kernel epsilon must lie in (0, 1/2), got {}",
                epsilon.as_f64()
            )));
        }
        Ok(Self { epsilon })
    }

    #[inline]
    pub fn psi(&self, t: T) -> T {
        let e = self.epsilon;
        let e3 = e * e * e;
        if t < e {
            e3
        } else {
            let d = t - e + T::one();
            e3 / (d * d * d)
        }
    }

    #[inline]
    pub fn sigma(&self, t: T) -> T {
        t - self.psi(t).min(t)
    }
}

pub fn psi<T: Real>(t: T, eps: T) -> Result<T> {
    Ok(DelayKernel::new(eps)?.psi(t))
}

pub fn sigma<T: Real>(t: T, eps: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::InvalidParameter(format!("time must be nonnegative, got {}", t.as_f64())));
    }
    Ok(DelayKernel::new(eps)?.sigma(t))
}

/// Probability that a standard Brownian motion from 0 has different signs at
/// times `t - ψ` and `t`: `(1/π)·atan(√(ψ/(t - ψ)))`.
pub fn sign_flip_probability_for_delay<T: Real>(t: T, psi: T) -> Result<T> {
    if !(psi > T::zero()) || !(t > psi) {
        return Err(Error::OutOfDomain(format!(
            "need 0 < ψ < t, got t = {}, ψ = {}",
            t.as_f64(),
            psi.as_f64()
        )));
    }
    Ok((psi / (t - psi)).sqrt().atan() / T::PI())
}

/// [`sign_flip_probability_for_delay`] with the kernel delay `ψ(t)`.
pub fn sign_flip_probability<T: Real>(t: T, eps: T) -> Result<T> {
    let kernel = DelayKernel::new(eps)?;
    sign_flip_probability_for_delay(t, kernel.psi(t))
}

/// Monte Carlo frequency of `sgn(W_{σ(t)}) ≠ sgn(W_t)` for a standard Brownian motion.
pub fn sign_flip_frequency(rng: &RngStream, t: f64, eps: f64, n: usize) -> Result<MeanSe> {
    let kernel = DelayKernel::new(eps)?;
    let psi = kernel.psi(t);
    if !(t > psi) {
        return Err(Error::OutOfDomain(format!("need t > ψ(t), got t = {t}, ψ = {psi}")));
    }
    let s = kernel.sigma(t);
    let flips = replicate_map(rng, n, |_, mut r| {
        let w_s = s.sqrt() * r.normal();
        let w_t = w_s + psi.sqrt() * r.normal();
        ((w_s < 0.0) != (w_t < 0.0)) as u8 as f64
    });
    Ok(MeanSe::from_samples(&flips))
}

/// Integrand `1/√(4(u+1)³ - 1)` of the sup-distance bound constant.
pub fn delay_bound_integrand<T: Real>(u: T) -> T {
    let v = u + T::one();
    T::one() / (T::c(4.0) * v * v * v - T::one()).sqrt()
}

/// `64·(1 + (2/π)·∫_0^∞ du/√(4(u+1)³ - 1))`: the constant `C` in the bound
/// `E[sup (B̂ - B̃)²] ≤ C·ε` for the delayed coupling.
pub fn delay_bound_constant() -> Result<f64> {
    let q = integrate_upper(delay_bound_integrand::<f64>, 0.0, &QuadOptions::new(1e-13, 1e-13))?;
    Ok(64.0 * (1.0 + 2.0 / std::f64::consts::PI * q.value))
}
