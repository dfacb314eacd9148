//! Exact diagonalization and driven dynamics of small inhomogeneous Hubbard
//! chains, with the thermodynamic bookkeeping needed to compute average
//! quantum work, free-energy changes and entropy production, plus the
//! non-interacting (NI) and exact+NI approximation schemes.
//!
//! Energies are in units of the hopping `J`, times in `1/J`, and `k_B = 1`.

pub mod error;
pub mod lattice;
pub mod linalg;
pub mod spectra;
pub mod drive;
pub mod propagate;
pub mod metrics;
pub mod approx;
pub mod sweep;
pub mod persist;
pub mod validate;

pub use error::{Error, Result};
