//! Sparse coding and counting over an orthogonal appearance subspace.
//!
//! The crate implements a combined L1+L0 regularized representation of image
//! patches over an incrementally learned orthonormal basis, an accelerated
//! proximal gradient solver with closed-form proximal steps, robust (RPCA)
//! and incremental subspace learning, and an affine particle-filter tracker
//! built on top of them.
//!
//! Modules map one-to-one onto the subsystems:
//!
//! - [`prox`]: scalar/elementwise proximal operators and a brute-force oracle
//! - [`solver`]: the APG solver for the joint coding-and-counting model
//! - [`subspace`]: PCA/RPCA initialization and incremental subspace updates
//! - [`imaging`]: PGM/PPM IO, affine warp/crop, bounding-box geometry
//! - [`tracker`]: the particle filter tying everything together

pub mod error;
pub mod imaging;
pub mod linalg;
pub mod prox;
pub mod solver;
pub mod subspace;
pub mod tracker;

pub use error::{Error, Result};
