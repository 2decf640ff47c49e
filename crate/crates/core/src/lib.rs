// Index loops mirror the math in the numeric kernels; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod export;
pub mod global_path;
pub mod grid_world;
pub mod icr_estimator;
pub mod kinematics;
pub mod minco;
pub mod ms_trajectory;
pub mod optimizer;
pub mod penalties;
pub mod planner;
pub mod replanner;
pub mod sim;
pub mod tracker;
