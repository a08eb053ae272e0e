//! Soft-body foot walking simulation and gait-analysis toolkit.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contact;
pub mod gaitlab;
pub mod mesh;
pub mod sim;
pub mod skeleton;
pub mod softbody;
