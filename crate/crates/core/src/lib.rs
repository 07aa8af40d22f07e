//! Zeros of type II multiple orthogonal polynomials on Angelesco systems and
//! their sensitivity to a parameter of the weights.

// `!(x <= tol)` is used on purpose so that NaN lands in the failure branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod mop;
pub mod poly;
pub mod quadrature;
pub mod sensitivity;
pub mod verify;
pub mod weights;

pub use config::Config;
pub use error::{Error, Result};
pub use mop::{AngelescoSystem, MopPoly, Partition, ZeroSet};
pub use sensitivity::SensitivitySystem;
pub use weights::{CatalogWeight, Family, Interval, Weight, WeightSpec};
