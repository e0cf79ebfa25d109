//! Quasi-static volume-conductor modeling for one or two closely spaced
//! stimulation leads.
//!
//! The crate is `no_std` (with `alloc`) by default. Everything here is pure
//! computation over in-memory volumes: file formats, configuration and the
//! command-line front end live in the `dualvta` crate.
//!
//! Pipeline, bottom-up:
//!
//! * [`volume`]: regular voxel grids and the fields stored on them.
//! * [`geometry`]: lead and contact geometry, voxelized into a [`geometry::ConductorMap`].
//! * [`conductivity`]: tissue tables and the trace-preserving diffusion-to-conductivity map.
//! * [`solver`]: finite-volume discretization of `div(sigma grad u) = 0` with driven,
//!   grounded and floating conductors, solved by preconditioned conjugate gradients.
//! * [`activation`]: electric-field norm and activating-function metrics on an evaluation grid.
//! * [`vta`]: thresholded activation volumes, single-lead approximations, comparison and coverage.
//! * [`optimizer`]: amplitude and contact-configuration search over unit-stimulus banks.
//!
//! Enable the `parallel` feature to run matrix-vector products, reductions and
//! per-node evaluation on rayon's thread pool.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod activation;
pub mod conductivity;
mod error;
pub mod geometry;
pub mod math;
pub mod optimizer;
mod par;
pub mod solver;
pub mod volume;
pub mod vta;

pub use error::{Error, Result};
pub use par::Reduction;
