//! Conical square functions on closed sets with non-homogeneous atomic measures.

pub mod czdecomp;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lattice;
pub mod martingale;
pub mod measure;
pub mod operator;
pub mod rng;
pub mod suppression;
pub mod whitney;

pub use error::{Error, Result};
