//! Radial Landau–Pekar laboratory.
//!
//! Computes the Pekar minimizer and the spectral structure of the effective
//! Hamiltonian h_φ = −Δ + V_φ in the spherically symmetric sector, integrates
//! the coupled electron/field dynamics, tracks the corrected adiabatic
//! approximation and audits the coercivity of the Pekar functionals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod coercivity;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod par;
pub mod pekar;
pub mod radial;
pub mod spectral;

pub use error::{Error, Result};
