#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cv;
pub mod error;
pub mod fastexp;
pub mod kernels;
pub mod mixtures;
pub mod pairwise;
pub mod pcv;
pub mod quadrature;
pub mod search;
pub mod seed;
