//! Dense tensors, reverse-mode differentiation, Adam, and seeded randomness.

mod adam;
mod rng;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use rng::{glorot_uniform, sample_standard_normal, RandomSource};
pub use tape::{sigmoid, Gradients, Tape, Var, PROB_EPS};
pub use tensor::Tensor;
