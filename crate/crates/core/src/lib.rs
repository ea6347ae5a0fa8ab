//! Cold-start adaptor for deep clustering: turns an unlabeled clustering
//! problem into a semi-supervised one by sampling pseudo-labeled data,
//! aligning instance-level labels with entropic optimal transport, and
//! mapping them to cluster-level labels through class-transition tracking.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ctt;
pub mod data;
pub mod error;
pub mod hungarian;
pub mod kmeans;
pub mod kmedoids;
pub mod learner;
pub mod mat;
pub mod metrics;
pub mod ot;
pub mod pipeline;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
