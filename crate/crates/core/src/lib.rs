//! Kernel-weighted contrastive losses on the hypersphere.
//!
//! The y-aware InfoNCE loss weights every candidate by the similarity of its
//! meta-data to the anchor's. It splits exactly into a conditional alignment
//! term and a global uniformity term; [`losses`] also provides the
//! conditional uniformity estimator that repels only samples whose meta-data
//! differ. Every loss ships analytic gradients checked by [`gradcheck`].

pub mod dataeval;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod losses;
pub mod numerics;
pub mod synthlab;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
