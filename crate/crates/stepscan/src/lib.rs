// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiple change-point segmentation of independent sequences with local
//! likelihood-ratio scans, analytic false-positive control, confidence regions
//! for change-points and power approximations.

#![forbid(unsafe_code)]

pub mod error;
mod numeric;
pub mod specialfn;
pub mod stats;
pub mod pvalue;
pub mod segment;
pub mod power;
pub mod confidence;
pub mod expfam;
pub mod sim;

pub use error::{Error, Result};
