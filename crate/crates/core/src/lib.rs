#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod mm;
pub mod scgmm;
pub mod sim;
pub mod trees;
