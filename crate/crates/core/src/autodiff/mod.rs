//! Minimal reverse-mode differentiation kernel: tensors, a recording tape,
//! named parameters, Adam, finite-difference checks, and checkpoint I/O.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_parameters, finite_diff_check, GradCheckReport};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{log1p_exp, logistic, Axis, Gradients, Tape, Var};
pub use tensor::{exact_sum, Tensor};
