//! Conformal and topological Laplace spectra of closed surfaces.
//!
//! The crate discretizes a closed surface as a [`mesh::TriangleMesh`] with
//! intrinsic edge lengths, represents a metric in the conformal class of the
//! mesh by a positive per-vertex [`spectral::ConformalDensity`], and computes
//! the low Laplace–Beltrami spectrum of the resulting pencil. On top of that
//! it maximizes normalized eigenvalues over the conformal class
//! ([`optimize`]), performs gluing, collapse and handle surgeries
//! ([`constructions`]) and evaluates the closed-form spectral bounds
//! ([`bounds`]) the experiments ([`experiments`]) compare against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod constructions;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod optimize;
pub mod spectral;

pub use error::{Error, MeshError, Result};
