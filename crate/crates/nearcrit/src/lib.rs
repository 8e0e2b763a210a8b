//! Near-critical planar percolation: label fields, minimal spanning trees,
//! invasion percolation, pivotal networks and tree-shape statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arms;
pub mod ensemble;
pub mod error;
pub mod forest;
pub mod geometry;
pub mod pivnet;
pub mod stats;
pub mod treespace;

pub use error::{Error, Result};
