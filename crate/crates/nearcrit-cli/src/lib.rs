//! Command-line experiment runner built on the `nearcrit` library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod run;
pub mod snapshot;
pub mod svg;
