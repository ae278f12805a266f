//! Diagonal-norm summation-by-parts operators on 2D point clouds.
//!
//! The pipeline goes level set and nodes -> quadtree cut-cell mesh ->
//! quadrature -> stencils -> cell operators -> global assembly -> norm
//! linear program -> finalized operators. The [`advection`] module uses the
//! result to discretize linear advection in skew-symmetric form.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod advection;
pub mod assembly;
pub mod basis;
pub mod cellops;
pub mod cutquad;
pub mod dissipation;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod normlp;
pub mod pipeline;
pub mod sparse;
pub mod stencil;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
