//! Random streams and exact-in-law Brownian building blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded random stream. The variate sequence depends only on
/// `(master_seed, stream_index)`; distinct indices select disjoint ChaCha streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Sub-stream for replicate `index`, derived from this stream's identity
    /// (never from its current position), so it is independent of scheduling.
    pub fn replicate(&self, index: u64) -> RngStream {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream::new(key, index)
    }

    /// Independent child stream labelled by `tag` (used to separate experiment parts).
    pub fn child(&self, tag: u64) -> RngStream {
        RngStream::new(splitmix64(self.master_seed.wrapping_add(splitmix64(tag))) ^ self.stream_index, 0)
    }

    /// Standard normal variate.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform variate on the half-open interval `(0, 1]`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }
}

/// Uniform time grid `t_k = t0 + k·dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_steps < 1 {
            return Err(Error::InvalidGrid("at least one step required".into()));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidGrid("t0 must be finite".into()));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid covering `[0, horizon]` with `ceil(horizon/dt)` steps.
    pub fn covering(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        Self::new(0.0, dt, (horizon / dt).ceil().max(1.0) as usize)
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }
}

/// Gaussian increment with mean 0 and variance `dt`.
pub fn gaussian_increment(rng: &mut RngStream, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
    }
    Ok(dt.sqrt() * rng.normal())
}

/// Inverse-CDF draw of the bridge maximum with uniform `u ∈ (0, 1]`.
#[inline]
pub fn bridge_maximum_from_uniform(x0: f64, x1: f64, h: f64, u: f64) -> f64 {
    let d = x1 - x0;
    let m = 0.5 * (x0 + x1 + (d * d - 2.0 * h * u.ln()).sqrt());
    m.max(x0).max(x1)
}

/// Maximum of a Brownian bridge from `x0` to `x1` over a step of length `h`,
/// sampled exactly by inverse transform of `P(M ≥ m) = exp(-2(m-x0)(m-x1)/h)`.
pub fn bridge_maximum(rng: &mut RngStream, x0: f64, x1: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidGrid(format!("bridge length must be positive, got {h}")));
    }
    Ok(bridge_maximum_from_uniform(x0, x1, h, rng.uniform()))
}

/// Minimum of a Brownian bridge (mirror of [`bridge_maximum`]).
pub fn bridge_minimum(rng: &mut RngStream, x0: f64, x1: f64, h: f64) -> Result<f64> {
    bridge_maximum(rng, -x0, -x1, h).map(|m| -m)
}

/// Probability that a Brownian bridge from `x0` to `x1` over time `h` touches `level`.
/// Returns 1 when the endpoints are not strictly on the same side of the level.
pub fn crossing_probability<T: Real>(x0: T, x1: T, level: T, h: T) -> T {
    let a = level - x0;
    let b = level - x1;
    if a * b <= T::zero() || !(h > T::zero()) {
        return T::one();
    }
    let p = (-T::c(2.0) * a * b / h).exp();
    p.max(T::zero()).min(T::one())
}

/// Laplace transform `E[exp(-α τ_d)] = exp(-√(2α) d)` of the first-passage time to distance `d`.
pub fn first_passage_mgf<T: Real>(d: T, alpha: T) -> Result<T> {
    if !(d >= T::zero()) || !(alpha >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "first-passage transform needs d ≥ 0 and alpha ≥ 0 (d = {}, alpha = {})",
            d.as_f64(),
            alpha.as_f64()
        )));
    }
    Ok((-(T::c(2.0) * alpha).sqrt() * d).exp())
}

/// Step-size rule for hitting-time simulation.
///
/// With `reach > 0` the step is `(distance/reach)²` clamped to `[dt, max_step]`,
/// where `distance` is the caller's distance to the nearest relevant barrier;
/// Gaussian endpoints plus bridge corrections keep every grid point exact in
/// law, so only the event-time rounding (at most one step of size `dt` near
/// the barrier) depends on `dt`. With `reach = 0` the grid is uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub dt: f64,
    pub reach: f64,
    pub max_step: f64,
}

impl StepPolicy {
    pub fn uniform(dt: f64) -> Self {
        Self {
            dt,
            reach: 0.0,
            max_step: dt,
        }
    }

    pub fn adaptive(dt: f64) -> Self {
        Self {
            dt,
            reach: 6.0,
            max_step: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.reach >= 0.0) || !(self.max_step >= self.dt) {
            return Err(Error::InvalidGrid("inconsistent step policy".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self, distance: f64) -> f64 {
        if self.reach <= 0.0 {
            return self.dt;
        }
        let r = distance / self.reach;
        (r * r).clamp(self.dt, self.max_step)
    }
}
