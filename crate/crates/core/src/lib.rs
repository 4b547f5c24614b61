// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layer-wise linear probing of transformer activations.

pub mod actstore;
pub mod curve;
pub mod curvestats;
pub mod designer;
pub mod harness;
pub mod linalg;
pub mod probekit;
pub mod scalar;
pub mod synthgen;

pub use scalar::Scalar;

pub type Matrix32 = linalg::Matrix<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ProbeModel32 = probekit::ProbeModel<f32>;
pub type ProbeModel64 = probekit::ProbeModel<f64>;
pub type Standardizer64 = probekit::Standardizer<f64>;
