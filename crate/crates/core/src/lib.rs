//! Kicked two-mode Bose-Hubbard system: the kicked top in its mean-field and
//! many-particle forms, Floquet spectra, and the tunneling of self-trapped
//! states between the two wells.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
mod csv;
pub mod error;
pub mod floquet;
pub mod landscape;
pub mod linalg;
pub mod manifest;
pub mod meanfield;
pub mod params;
pub mod signal;
pub mod spin;
pub mod tunneling;

pub use error::{Error, Result};
pub use params::SystemParams;
