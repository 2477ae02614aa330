//! Reverse-mode automatic differentiation over [`Tensor`](crate::tensor::Tensor)s.

mod gradcheck;
mod param;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
