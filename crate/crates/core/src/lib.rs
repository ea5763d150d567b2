#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod config;
pub mod error;
pub mod kernels;
pub mod levy;
pub mod measures;
pub mod montecarlo;
pub mod quad;
pub mod special;
pub mod verify;
