//! Small differentiable numeric layer: dense/sparse tensors, primitive ops
//! with hand-written vector-Jacobian products, a central-difference gradient
//! checker and Adam.

pub mod adam;
pub mod checkpoint;
pub mod fdcheck;
pub mod ops;
pub mod sparse;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use fdcheck::{finite_difference_check, finite_difference_check_with, FdOptions, FdReport};
pub use ops::Activation;
pub use sparse::CsrMatrix;
pub use tensor::Tensor2;
