//! Dense f64 tensors with tape-based reverse-mode differentiation,
//! an Adam optimizer and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod store;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::{check_gradients, check_param_gradients, compare_against_numeric, GradCheckReport};
pub use store::{Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, TensorRef};
