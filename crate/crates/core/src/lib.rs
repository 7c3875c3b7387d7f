//! Core library for certifying dissipativity of unknown linear systems from
//! measured data.
//!
//! The crate is organised bottom-up:
//!
//! * [`symmat`] — exactly-symmetric matrix wrapper with inertia, semidefinite
//!   tests and Schur complements under explicit tolerances.  Every definiteness
//!   decision in the crate goes through this module.
//! * [`lmi`] — a small dense LMI feasibility engine (affine constraints in
//!   symmetric-matrix and nonnegative-scalar unknowns) with certified margins
//!   and infeasibility evidence.
//! * [`sysmodel`] — state-space systems, quadratic supply rates, recorded
//!   input/state/output data, noise models and the set of systems consistent
//!   with the data.
//! * [`informativity`] — the decision procedures: is the data informative for
//!   dissipativity (exact and noisy variants), counterexample construction
//!   when it is not, and the S-procedure certificate check.
//! * [`oracle`] — independent sampling/frequency-grid cross-checks used to
//!   audit the certificates.
//! * [`datagen`] — reproducible scenario generation (random stable systems,
//!   excitation inputs, noise scaled to a target consistency margin).

pub mod datagen;
pub mod error;
pub mod informativity;
pub mod lmi;
pub mod oracle;
pub mod symmat;
pub mod sysmodel;

pub use error::{Error, Result};
pub use symmat::{Inertia, SymMat, Tolerances};
