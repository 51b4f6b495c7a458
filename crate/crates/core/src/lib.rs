//! Simulation, contraction certificates and switched observers for bimodal
//! Filippov systems.
//!
//! A plant has two smooth modes `F±` separated by the surface `h(x) = 0`.
//! [`simulate`] integrates it with sliding motion, [`certify`] checks
//! matrix-measure contraction conditions on the modes and on the surface,
//! [`observer`] runs a plant/observer pair and checks the exponential error
//! envelope, and [`synth`] searches observer gains.

// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod config;
pub mod exprparse;
pub mod measures;
pub mod observer;
pub mod regularize;
pub mod simulate;
pub mod synth;
pub mod systems;
