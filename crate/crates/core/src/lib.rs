//! Locally competitive algorithm (LCA) for l1-regularized sparse recovery.
//!
//! The LCA is a continuous-time network whose internal states `u(t)` evolve by
//!
//! ```text
//! tau * du/dt = -u - (Phi^T Phi - I) a + Phi^T y,    a = T_lambda(u)
//! ```
//!
//! and whose fixed points minimize `0.5 * ||y - Phi a||^2 + lambda * ||a||_1`.
//!
//! This crate is `no_std` (it needs `alloc`) and holds the numerical pieces:
//!
//! * [`ensemble`]: seeded generation of sparse signals, unit-column
//!   measurement matrices and noisy measurements.
//! * [`dynamics`]: soft thresholding, the LCA vector field, a fixed-step RK4
//!   backend and an exact switched-linear backend with threshold-crossing
//!   event location.
//! * [`oracle`]: the l1 objective, a proximal-gradient reference solver and
//!   the KKT optimality check.
//! * [`analysis`]: RIP constants, the active-set theorem conditions and their
//!   derived bounds, lemma checks, and convergence-rate statistics.
//!
//! All simulation times are measured in units of the time constant `tau`.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
pub mod ensemble;
mod error;
pub mod linalg;
pub mod oracle;
#[cfg(feature = "serde")]
mod serde_util;

pub use crate::error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
