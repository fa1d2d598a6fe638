// `!(v > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::needless_range_loop
)]

pub mod assignment;
pub mod error;
pub mod evaluation;
pub mod fairness;
pub mod matrix;
pub mod mintb;
pub mod models;
pub mod oftrl;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use fairness::{
    conjugate, dual_gradient, dual_minimizer, f_alpha, fairness_sum, psi, DualBox, FairnessParams,
};
pub use matrix::{AssignmentMatrix, Matrix};
pub use oftrl::{BoundCheck, EntropicOftrl, QuadOftrl, Sense};
