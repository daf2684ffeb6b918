//! Kernels on particle configurations and discrete probability measures.
//!
//! The crate covers empirical measures and exact Kantorovich–Rubinstein
//! distances, double-sum and pullback kernel families with their RKHS
//! machinery, particle-system observables, and experiments on the
//! mean-field limit `M → ∞`.

pub mod error;
pub mod io;
pub mod kernels;
pub mod meanfield;
pub mod measures;
pub mod numeric;
pub mod particles;
pub mod quadrature;
pub mod rkhs;
pub mod selftest;
pub mod transport;

pub use error::{Error, Result};
