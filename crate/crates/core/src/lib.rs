//! Couplings of Brownian motion with its local time at 0 and of BKR diffusions.
//!
//! The crate is layered:
//!
//! * [`sim_kernel`]: seeded random streams and exact Brownian building blocks
//!   (bridge extrema, crossing probabilities, first-passage transforms);
//! * [`levy`]: the Lévy transform `(X, L) ↦ (B, S)` and exact `(B, S)` paths;
//! * [`reflection`]: the reflection/synchronized coupling, its closed-form
//!   coupling-time transform and Monte Carlo estimators;
//! * [`maximal`]: reflection-principle densities and the maximal-coupling overlap;
//! * [`delay`]: time-delayed couplings and their staged concatenation;
//! * [`bkr`]: the BKR diffusion and its couplings.
//!
//! Analytic routines are generic over [`Real`]; the Monte Carlo engines run in `f64`.

pub mod bkr;
pub mod delay;
pub mod error;
pub mod levy;
pub mod maximal;
pub mod quadrature;
pub mod reflection;
pub mod scalar;
pub mod sim_kernel;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;
pub use sim_kernel::{RngStream, StepPolicy, TimeGrid};

/// `f64` instances of the generic types.
pub type LevyPair = levy::LevyPair<f64>;
pub type DiffusionState = levy::DiffusionState<f64>;
pub type CouplingConfig = reflection::CouplingConfig<f64>;
