//! Objectness-guided budgeted glimpse selection for closed-set detection and
//! prior-weighted (MAP) tile search for open-set targets over very large rasters.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation over
//! in-memory grids. File formats, CSV schemas, and the CLI live in the
//! companion `glimpsekit` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod detection;
pub mod geometry;
pub mod grid;
pub mod objectness;
pub mod openset;
pub mod policies;
pub mod scenegen;
pub mod seed;

pub use geometry::{BBox, GistGeometry, Scene, SceneObject};
pub use grid::Grid;
pub use objectness::{BinaryMask, GaussianKernel, GistMap, IntegralImage};
pub use policies::{GlimpseSet, PolicyConfig, PolicyKind, StopDecision, StopReason};
