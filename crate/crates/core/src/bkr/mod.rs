//! The BKR diffusion `sgn(X)dX + sgn(Y)dY = 0`, driven by a real Brownian motion
//! `A` through `dX = sgn(Y)dA`, `dY = -sgn(X)dA`, and its couplings.

mod coupling;
mod staged;

pub use coupling::{
    delayed_variant_coupling, delayed_variant_coupling_with, reconstruct_tilde_x, variant_coupling,
    variant_coupling_with, BkrCouplingRun, BkrDiagnostics, BkrOptions, BkrOutcome, BkrPairPoint, T2Trigger,
};
pub use staged::{concatenated_bkr_coupling, BkrPlan};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::sgn64;
use crate::sim_kernel::{crossing_probability, RngStream, TimeGrid};

/// Assignment of switch values to the two regions `{|X| < h}` and `{|Y| < h}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SwitchLabels {
    /// `K = 1` on entry to `{|X| < h}`, `K = 0` on entry to `{|Y| < h}`,
    /// `K_0 = 1` iff `|X_0| ≤ h`. Under this labeling `Y ≠ 0` while `K = 1`
    /// and `X ≠ 0` while `K = 0`.
    #[default]
    Consistent,
    /// The opposite assignment (for sensitivity runs).
    Flipped,
}

impl SwitchLabels {
    fn label(self, x_region: bool) -> u8 {
        match self {
            SwitchLabels::Consistent => x_region as u8,
            SwitchLabels::Flipped => (!x_region) as u8,
        }
    }

    /// Initial switch value for a start with half-diamond radius `h`.
    pub fn initial(self, x0: f64, h: f64) -> u8 {
        self.label(x0.abs() <= h)
    }

    /// Whether switch value `k` marks the `{|X| < h}` phase (in which `Y` is protected).
    pub fn is_x_phase(self, k: u8) -> bool {
        self.label(true) == k
    }
}

/// State of a BKR diffusion: coordinates, switch value, driving Brownian value
/// and the half-diamond radius `h = ½(|x0| + |y0|)` of its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkrState {
    pub x: f64,
    pub y: f64,
    pub k: u8,
    pub a: f64,
    pub h: f64,
}

impl BkrState {
    pub fn new(x0: f64, y0: f64, labels: SwitchLabels) -> Result<Self> {
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidState("BKR start must be finite".into()));
        }
        if x0 == 0.0 && y0 == 0.0 {
            return Err(Error::UnsupportedStart("BKR diffusions started at the origin are not supported".into()));
        }
        let h = 0.5 * (x0.abs() + y0.abs());
        Ok(Self {
            x: x0,
            y: y0,
            k: labels.initial(x0, h),
            a: 0.0,
            h,
        })
    }

    /// `ℓ = |x| + |y|`, which grows with the local times of both coordinates at 0.
    pub fn ell(&self) -> f64 {
        self.x.abs() + self.y.abs()
    }

    /// Applies a driving increment with start-of-step signs, so that
    /// `sgn(X)ΔX + sgn(Y)ΔY = 0` exactly.
    #[inline]
    pub(crate) fn apply(&mut self, da: f64) {
        let (sx, sy) = (sgn64(self.x), sgn64(self.y));
        self.x += sy * da;
        self.y -= sx * da;
        self.a += da;
    }

    /// Updates the switch after a step from `prev`, detecting region entries
    /// (including sub-step touches of `±h`) with bridge tests.
    pub(crate) fn update_switch(&mut self, prev: &BkrState, step: f64, labels: SwitchLabels, rng: &mut RngStream) {
        let entered = |p: f64, q: f64, h: f64, u: f64| {
            p.abs() < h || q.abs() < h || sgn64(p) != sgn64(q) || u <= crossing_probability(p, q, sgn64(p) * h, step)
        };
        let x_in = !labels.is_x_phase(self.k) && entered(prev.x, self.x, self.h, rng.uniform());
        let y_in = labels.is_x_phase(self.k) && entered(prev.y, self.y, self.h, rng.uniform());
        if x_in && y_in {
            // Both regions touched within one step: the endpoint decides.
            self.k = labels.label(self.x.abs() < self.y.abs());
        } else if x_in {
            self.k = labels.label(true);
        } else if y_in {
            self.k = labels.label(false);
        }
    }
}

/// Simulated BKR path on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkrPath {
    pub grid: TimeGrid,
    pub states: Vec<BkrState>,
    pub labels: SwitchLabels,
}

impl BkrPath {
    /// `min_k (ℓ_{k+1} - ℓ_k)`.
    pub fn min_ell_increment(&self) -> f64 {
        self.states.windows(2).map(|w| w[1].ell() - w[0].ell()).fold(f64::INFINITY, f64::min)
    }

    pub fn min_ell(&self) -> f64 {
        self.states.iter().map(BkrState::ell).fold(f64::INFINITY, f64::min)
    }

    /// Largest `|sgn(X_k)ΔX_k + sgn(Y_k)ΔY_k|` over the path.
    pub fn max_constraint_residual(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| (sgn64(w[0].x) * (w[1].x - w[0].x) + sgn64(w[0].y) * (w[1].y - w[0].y)).abs())
            .fold(0.0, f64::max)
    }

    /// Within each maximal constant-`K` phase the protected coordinate (`Y` in the
    /// `{|X| < h}` phase, `X` otherwise) keeps a constant sign.
    pub fn protection_holds(&self) -> bool {
        protection_holds(&self.states, self.labels)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("t,x,y,k,a\n");
        for (i, s) in self.states.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{},{:.16e}", self.grid.time(i), s.x, s.y, s.k, s.a);
        }
        out
    }
}

pub(crate) fn protection_holds(states: &[BkrState], labels: SwitchLabels) -> bool {
    let protected = |s: &BkrState| if labels.is_x_phase(s.k) { s.y } else { s.x };
    states.windows(2).all(|w| {
        if w[0].k != w[1].k {
            return true;
        }
        let (p, q) = (protected(&w[0]), protected(&w[1]));
        p != 0.0 && q != 0.0 && sgn64(p) == sgn64(q)
    })
}

/// Simulates a BKR diffusion from `(x0, y0)` with the explicit scheme
/// `ΔX_k = sgn(Y_k)ΔA_k`, `ΔY_k = -sgn(X_k)ΔA_k` on a uniform grid.
pub fn simulate_bkr(rng: &mut RngStream, x0: f64, y0: f64, dt: f64, horizon: f64) -> Result<BkrPath> {
    simulate_bkr_with(rng, x0, y0, dt, horizon, SwitchLabels::Consistent)
}

pub fn simulate_bkr_with(
    rng: &mut RngStream,
    x0: f64,
    y0: f64,
    dt: f64,
    horizon: f64,
    labels: SwitchLabels,
) -> Result<BkrPath> {
    let mut s = BkrState::new(x0, y0, labels)?;
    let grid = TimeGrid::covering(horizon, dt)?;
    let sd = dt.sqrt();
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    states.push(s);
    for _ in 0..grid.n_steps {
        let prev = s;
        let da = sd * rng.normal();
        if !da.is_finite() {
            return Err(Error::NumericFailure("non-finite BKR increment".into()));
        }
        s.apply(da);
        s.update_switch(&prev, dt, labels, rng);
        states.push(s);
    }
    Ok(BkrPath { grid, states, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_unsupported() {
        assert!(matches!(BkrState::new(0.0, 0.0, SwitchLabels::Consistent), Err(Error::UnsupportedStart(_))));
        let mut r = RngStream::new(1, 0);
        assert!(simulate_bkr(&mut r, 0.0, 0.0, 1e-3, 1.0).is_err());
    }

    #[test]
    fn initial_switch() {
        let s = BkrState::new(0.2, 1.0, SwitchLabels::Consistent).unwrap();
        assert_eq!((s.h, s.k), (0.6, 1));
        let s = BkrState::new(1.0, 0.2, SwitchLabels::Consistent).unwrap();
        assert_eq!(s.k, 0);
        let s = BkrState::new(1.0, 0.2, SwitchLabels::Flipped).unwrap();
        assert_eq!(s.k, 1);
    }

    #[test]
    fn per_step_constraint_and_monotone_ell() {
        let mut r = RngStream::new(2, 0);
        let p = simulate_bkr(&mut r, 0.3, -0.7, 1e-4, 1.0).unwrap();
        assert!(p.max_constraint_residual() < 1e-15);
        assert!(p.min_ell_increment() >= -1e-15);
        assert!(p.min_ell() >= 1.0 - 1e-12);
        assert!(p.protection_holds());
        for w in p.states.windows(2) {
            let (dx, dy, da) = (w[1].x - w[0].x, w[1].y - w[0].y, w[1].a - w[0].a);
            assert!((dx.abs() - da.abs()).abs() < 1e-15 && (dy.abs() - da.abs()).abs() < 1e-15);
        }
    }
}
