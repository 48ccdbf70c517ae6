//! Self-distilled graph encoder training and evaluation.

pub mod diffgrad;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod model;
pub mod objective;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod trainer;

pub use diffgrad::{Activation, CsrMatrix, Tensor2};
pub use error::{Error, Result};
pub use graph::Graph;
pub use model::{Encoder, Params, ViewGrads, Views};
pub use objective::{LossBreakdown, Score, Terms};
pub use rng::SeedStream;
pub use trainer::{TrainConfig, TrainState, Trainer};
