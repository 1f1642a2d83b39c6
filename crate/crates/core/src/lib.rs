//! High-harmonic generation from a one-dimensional model crystal.
//!
//! Bloch-state amplitudes are propagated in the velocity gauge and mapped
//! onto the length gauge at the instants where the field-driven shift of the
//! crystal momentum is commensurate with the k-grid. The total current is the
//! same in both gauges; its intraband/interband split is not.
//!
//! Everything internal is in Hartree atomic units (see [`units`]).

pub mod bloch;
pub mod config;
pub mod error;
pub mod gauge;
pub mod linalg;
pub mod matels;
pub mod observables;
pub mod pipeline;
pub mod plot;
pub mod potential;
pub mod propagate;
pub mod pulse;
pub mod sum;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
