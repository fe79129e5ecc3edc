//! Brownian motion with its local time at 0, in Lévy-transform coordinates.
//!
//! `B = L - |X|` is a Brownian motion and `S = L` is its running supremum
//! floored at the initial local time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim_kernel::{bridge_maximum_from_uniform, RngStream, TimeGrid};

/// Position `x` of a Brownian motion together with its accumulated local time `l` at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionState<T = f64> {
    pub x: T,
    pub l: T,
}

/// Lévy coordinates `(b, s)` with the supremum floor `s_floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyPair<T = f64> {
    pub b: T,
    pub s: T,
    pub s_floor: T,
}

impl<T: Real> LevyPair<T> {
    pub fn new(b: T, s: T) -> Result<Self> {
        if !(s >= b) {
            return Err(Error::InvalidPair(format!("s = {} below b = {}", s.as_f64(), b.as_f64())));
        }
        Ok(Self { b, s, s_floor: s })
    }

    /// Recovered reflected position `|x| = s - b`.
    pub fn abs_x(&self) -> T {
        self.s - self.b
    }
}

pub fn to_levy<T: Real>(state: DiffusionState<T>) -> Result<LevyPair<T>> {
    if !(state.l >= T::zero()) {
        return Err(Error::InvalidState(format!("local time must be nonnegative, got {}", state.l.as_f64())));
    }
    Ok(LevyPair {
        b: state.l - state.x.abs(),
        s: state.l,
        s_floor: state.l,
    })
}

/// Inverse of [`to_levy`] given the excursion sign (the transform is 2:1).
pub fn from_levy<T: Real>(pair: LevyPair<T>, sign: i8) -> Result<DiffusionState<T>> {
    if !(pair.s >= pair.b) {
        return Err(Error::InvalidPair(format!(
            "s = {} below b = {}",
            pair.s.as_f64(),
            pair.b.as_f64()
        )));
    }
    let sign = match sign {
        1 => T::one(),
        -1 => -T::one(),
        other => return Err(Error::InvalidParameter(format!("sign must be ±1, got {other}"))),
    };
    Ok(DiffusionState {
        x: sign * (pair.s - pair.b),
        l: pair.s,
    })
}

/// Simulates `(b_k, s_k)` on `grid`, exact in law at the grid points: `b` is a
/// Gaussian walk and `s` takes the max with a sampled bridge maximum per step.
pub fn simulate_levy_path(rng: &mut RngStream, b0: f64, s0: f64, grid: &TimeGrid) -> Result<Vec<LevyPair>> {
    let grid = TimeGrid::new(grid.t0, grid.dt, grid.n_steps)?;
    if !(s0 >= b0) {
        return Err(Error::InvalidPair(format!("s0 = {s0} below b0 = {b0}")));
    }
    let sd = grid.dt.sqrt();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    let mut cur = LevyPair { b: b0, s: s0, s_floor: s0 };
    out.push(cur);
    for _ in 0..grid.n_steps {
        let b1 = cur.b + sd * rng.normal();
        if !b1.is_finite() {
            return Err(Error::NumericFailure("non-finite increment".into()));
        }
        let m = bridge_maximum_from_uniform(cur.b, b1, grid.dt, rng.uniform());
        cur = LevyPair {
            b: b1,
            s: cur.s.max(m),
            s_floor: s0,
        };
        out.push(cur);
    }
    Ok(out)
}

/// Terminal pair only, without storing the path.
pub fn simulate_levy_terminal(rng: &mut RngStream, b0: f64, s0: f64, grid: &TimeGrid) -> Result<LevyPair> {
    let grid = TimeGrid::new(grid.t0, grid.dt, grid.n_steps)?;
    if !(s0 >= b0) {
        return Err(Error::InvalidPair(format!("s0 = {s0} below b0 = {b0}")));
    }
    let sd = grid.dt.sqrt();
    let (mut b, mut s) = (b0, s0);
    for _ in 0..grid.n_steps {
        let b1 = b + sd * rng.normal();
        s = s.max(bridge_maximum_from_uniform(b, b1, grid.dt, rng.uniform()));
        b = b1;
    }
    Ok(LevyPair { b, s, s_floor: s0 })
}

/// Reconstructs `x` along a path, alternating the excursion sign each time
/// `|x| = s - b` returns to zero (display only; the sign is not part of the law
/// of `(b, s)`).
pub fn alternating_signs(path: &[LevyPair], first: i8) -> Vec<DiffusionState> {
    let mut sign = first;
    let mut prev_zero = false;
    path.iter()
        .map(|p| {
            let ax = p.s - p.b;
            let at_zero = ax <= 0.0;
            if at_zero && !prev_zero {
                sign = -sign;
            }
            prev_zero = at_zero;
            DiffusionState {
                x: if sign > 0 { ax } else { -ax },
                l: p.s,
            }
        })
        .collect()
}

/// Renders a path as CSV with columns `t,b,s`.
pub fn path_csv(grid: &TimeGrid, path: &[LevyPair]) -> String {
    let mut out = String::from("t,b,s\n");
    for (k, p) in path.iter().enumerate() {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", grid.time(k), p.b, p.s);
    }
    out
}
