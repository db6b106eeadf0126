//! Dense fp64 matrices, a reverse-mode tape, seeded randomness and the
//! optimizer.

pub mod gradcheck;
mod losses;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use losses::{exp_cosine, info_nce};
pub(crate) use losses::reject_zero_rows;
pub use optim::{adam_update, AdamConfig, Bound, ParamStore};
pub use rng::{gaussian_matrix, glorot, Rng};
pub use tape::{Gradients, Tape, Var, NORM_FLOOR};
pub use tensor::Tensor;
