//! Max-min power control for user-centric cell-free massive MIMO under
//! electromagnetic-field exposure constraints.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: network drops on a wrap-around square, user-AP association
//!   and the cell-free to multi-cell mapping.
//! - [`channel`]: Rician propagation with a distance-driven Rician factor,
//!   3GPP urban-micro path loss, ULA steering vectors and covariances.
//! - [`estimation`]: pilot assignment, pilot phase and LMMSE estimates.
//! - [`metrics`]: conjugate beamforming, DL/UL SINR, rates, IPD and SAR.
//! - [`convex`]: bisection and a log-barrier phase-I solver for convex QCQPs.
//! - [`ul_opt`] / [`dl_opt`]: the max-min power control solvers.
//! - [`baselines`]: UPC, PPC and FPC heuristics.
//! - [`harness`]: configuration, Monte-Carlo campaigns, CSV and CDF output.

pub mod baselines;
pub mod channel;
pub mod convex;
pub mod dl_opt;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod metrics;
pub mod scenario;
pub mod ul_opt;
pub mod units;

pub use error::{Error, Result};

/// Complex double used throughout the signal model.
pub type C64 = num_complex::Complex64;
/// Dense complex column vector (one antenna array).
pub type CVector = nalgebra::DVector<C64>;
/// Dense complex matrix (covariances).
pub type CMatrix = nalgebra::DMatrix<C64>;
