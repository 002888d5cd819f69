//! Branching random walks in time-space i.i.d. random environment on `Z^d`.
//!
//! The crate has two halves. The simulation half ([`env`], [`sim`], [`stats`])
//! realizes the particle system, either as aggregated site counts (large
//! populations) or as an explicit genealogy (small exact checks), and
//! computes the normalized observables of each state. The oracle half
//! ([`kernels`], [`oracle`]) computes the same quantities without simulating:
//! return probabilities, space-time harmonic polynomials, quenched means,
//! and the annealed two-walk second moment.

pub mod env;
pub mod error;
pub mod kernels;
pub mod lattice;
pub mod oracle;
pub mod prf;
pub mod rational;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{MultiIndex, Site, MAX_DIM};
