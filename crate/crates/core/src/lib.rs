//! Spatiotemporal log-Gaussian Cox process models on finite-element meshes.
//!
//! The crate is `no_std` (with `alloc`) and contains the whole numerical
//! pipeline: planar geometry and road-network buffering, constrained mesh
//! generation, SPDE/Matérn precision assembly, AR(1) space-time GMRFs, the
//! augmented Poisson likelihood, Laplace/empirical-Bayes inference with PC
//! priors and information criteria, and a thinning-based LGCP simulator.
//!
//! File formats, configuration and the command-line front end live in the
//! `stlgcp` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod inference;
pub mod likelihood;
pub mod mesh;
pub mod simulate;
pub mod sparse;
pub mod spde;
pub mod special;
pub mod st_gmrf;

pub use error::{Error, Result};
pub use mesh::{Mesh, MeshConfig, Projector};
pub use spde::MaternParams;
pub use st_gmrf::ArParams;
pub use sparse::{Cholesky, SparseSymmetric};
pub use geometry::{FacilityKind, FacilityLayer, Point, Polygon, RoadNetwork, Segment};




