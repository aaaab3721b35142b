//! Finite-element spectral toolkit for Dirichlet Laplacians on planar domains made of a
//! bounded core and attached straight tubes.
//!
//! The pipeline is: describe a domain ([`geometry`]), truncate and mesh it ([`mesh`]),
//! assemble P1 operators ([`fem`]), solve with LOBPCG ([`linalg`]), and run the studies in
//! [`spectra`], [`decay`], [`weyl`], [`torsion`] and [`perturb`].

pub mod decay;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod perturb;
pub mod spectra;
pub mod torsion;
pub mod weyl;

pub use error::{Error, Result};
