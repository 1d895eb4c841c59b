//! Stochastic momentum and adaptive-stepsize optimization in the unified
//! `(v, m, x)` form.
//!
//! The crate covers one family of methods: a second-moment accumulator `v`,
//! a momentum `m` and the parameters `x`, driven by four time-varying
//! coefficients `h, r, p, q`. Adam, RMSProp/AdaGrad-like updates and the
//! heavy ball are members of the family; stochastic Nesterov (S-NAG) is the
//! damped second-order limit case.
//!
//! Modules, bottom-up:
//!
//! - [`schedules`]: the coefficient functions and their limits.
//! - [`problems`]: objectives, gradient oracles and closed-form second moments.
//! - [`integrate`]: RK4 integration of the continuous-time dynamics plus
//!   energy and equilibrium diagnostics.
//! - [`optimize`]: the discrete stochastic algorithms and Monte-Carlo runs.
//! - [`spectral`]: Jacobi eigensolver, Lyapunov-equation solver, Hurwitz margins.
//! - [`clt`]: asymptotic covariance at a strict local minimum.
//! - [`traps`]: linearization at saddles, unstable spectrum, escape experiments.

pub mod clt;
pub mod error;
pub mod integrate;
pub mod optimize;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod spectral;
pub mod state;
pub mod traps;

pub use error::{Error, Result};
pub use state::IterateState;
