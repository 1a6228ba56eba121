// `!(v > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundaries;
pub mod calibration;
pub mod duality;
pub mod error;
pub mod fundamental;
pub mod market;
pub mod numerics;
pub mod payoff;
pub mod pricing;
pub mod vol;
