//! Dense numeric core: matrices, a reverse-mode tape over a small set of
//! primitives, Adam, and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod loss;
mod matrix;
mod params;
mod tape;
mod train;

pub use adam::AdamState;
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use matrix::Matrix;
pub use params::{glorot_uniform, Param, ParamStore};
pub use tape::{Gradients, Neighborhoods, Pooling, Propagation, Tape, Var};
pub use train::{fit, EpochLog, Objective, Prediction, TrainConfig, TrainOutcome};
