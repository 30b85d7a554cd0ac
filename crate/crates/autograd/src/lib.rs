//! Dense tensors with define-by-run reverse-mode differentiation, an Adam
//! optimizer, and a finite-difference gradient checker.
//!
//! Training runs in `f32`; the same code instantiated at `f64` serves the
//! gradient checks.

mod adam;
mod error;
mod gradcheck;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use error::{Result, TensorError};
pub use gradcheck::{all_points, grad_check, GradCheckReport, GRAD_CHECK_STEP};
pub use scalar::Scalar;
pub use tape::{Tape, TreeLink, Var};
pub use tensor::Tensor;
