//! Desk-scale stochastic simulator of quantum-logic rotational spectroscopy:
//! a single trapped molecular ion, co-trapped with an atomic logic ion, is
//! interrogated by a pair of optical frequency combs. The crate models the
//! two-ion crystal, the molecular rotor, the pulse-by-pulse experiment
//! dynamics, the four measurement protocols built on them, and the offline
//! analysis that turns comb-aliased resonances back into rotational
//! constants.

pub mod analysis;
pub mod config;
pub mod constants;
pub mod crystal;
pub mod dynamics;
pub mod error;
pub mod event;
pub mod molecule;
pub mod protocols;
pub mod runner;

pub use error::{Error, Result};
