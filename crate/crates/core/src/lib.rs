//! Numerical laboratory for fractional moments of random Schrödinger operators.
pub mod criteria;
pub mod dynamical;
pub mod ensemble;
pub mod error;
pub mod inequalities;
pub mod io;
pub mod lattice;
pub mod matrix;
pub mod moments;
pub mod propagate;
pub mod quad;
pub mod regularity;
pub mod resolvent;
pub mod rng;
pub mod stats;
pub mod sweep;
pub mod verify;
pub use error::{Error, Result};
