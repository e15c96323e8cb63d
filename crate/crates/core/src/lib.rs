//! Ensemble Gaussian-process regression for large datasets.
//!
//! The input space `[0,1]^d` is cut into axis-aligned boxes that each hold
//! between `N_min` and `N_max` training points. A graph walk over the boxes
//! draws one point per box, conditioning each draw on the responses already
//! drawn in neighbouring boxes, and a small global GP is fitted to every such
//! subsample. The equally weighted mixture of the members' Gaussian
//! predictions is the predictive distribution, which can be multimodal.
//!
//! Pipeline: [`ingest`] → [`partition`] → [`sampler`] → [`gp`] →
//! [`ensemble`] → [`evaluate`]; [`cli`] wires the stages to files on disk.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod gp;
pub mod ingest;
pub mod partition;
pub mod points;
pub mod sampler;

pub use error::{Error, Result};
pub use points::Points;
