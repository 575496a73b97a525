//! Segmentation loss kernels with analytic gradients.
//!
//! Losses are grouped by family under [`loss`]: cross-entropy variants,
//! overlap (Dice/Tversky) losses, boundary and Hausdorff losses built on the
//! exact distance transforms in [`distance`], and compound losses. Every
//! kernel returns its value together with `dL/ds`, which [`gradcheck`]
//! verifies against central differences and [`optimize`] drives through a
//! softmax to check where each loss is minimized.

pub mod distance;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod optimize;
pub mod relations;
pub mod sample;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use exec::Exec;
pub use loss::LossSpec;
pub use tensor::{
    one_hot, softmax, softmax_vjp, validate_prob, BinaryMask, Flag, LabelMap, LossConfig, LossResult, OneHot,
    ProbMap, Shape,
};
