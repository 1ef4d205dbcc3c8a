//! Deterministic numeric core: dense matrices, masked linear maps, the
//! gradient tape, Adam and seeded randomness.

mod gradcheck;
mod masked;
mod matrix;
mod ops;
mod rng;
mod sparse;
mod tape;

pub use gradcheck::{gradcheck, rel_error, GradCheck, FD_STEP, GRAD_FLOOR, KINK_GAP};
pub use masked::{masked_linear, SparseMask};
pub use matrix::Matrix;
pub use ops::{
    activation, adam_step, bce_loss, glorot_bound, glorot_init, sigmoid, Activation, AdamConfig,
    AdamState, BCE_EPS,
};
pub use rng::{derive_seed, mix64, SeededRng};
pub use sparse::CsrMatrix;
pub use tape::{Grads, Tape, Var};
