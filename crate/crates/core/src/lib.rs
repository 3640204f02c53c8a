//! Exact finite-instance computation of convex-analytic generalization bounds.
//!
//! Everything here works on explicit tables: a finite hypothesis set, a finite
//! instance space with law `mu`, and the product law `mu^n` over datasets.

pub mod divergence;
pub mod error;
pub mod ghost;
pub mod norm;
pub mod potential;
pub mod prob;
pub mod rng;
pub mod transport;
pub mod scenario;
pub mod sgd;
pub mod bounds;
pub mod oracle;
pub mod verify;
pub mod report;

pub use error::{Error, Result};
