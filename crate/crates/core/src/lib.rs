//! Divide-and-conquer binary classification by feature-space decomposition.
//!
//! The feature space is transformed and carved into subspaces
//! ([`decompose`]), an independent local classifier is trained on each
//! subspace ([`classify`]), and a global classifier fuses the local scores
//! ([`fuse`]).

pub mod classify;
pub mod cli;
pub mod dataio;
pub mod decompose;
pub mod error;
pub mod fuse;
pub mod hexfloat;
pub mod numerics;
pub mod persist;

pub use error::{Error, ErrorClass, Result, Stage};
