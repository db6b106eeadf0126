//! Small dense building blocks shared by the model components.

use crate::diffmath::{glorot, ParamStore, Rng, Tape, Tensor, Var};
use crate::error::Result;

/// Registers a `d_in -> d_out` affine layer as `{prefix}.w` / `{prefix}.b`.
pub(crate) fn init_linear(store: &mut ParamStore, rng: &mut Rng, prefix: &str, d_in: usize, d_out: usize) -> Result<()> {
    store.insert(format!("{prefix}.w"), glorot(rng, d_in, d_out))?;
    store.insert(format!("{prefix}.b"), Tensor::zeros(1, d_out))
}

/// `x · W + b`, with `W` stored as `d_in x d_out`.
pub(crate) fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_row(xw, b)
}

/// Two affine layers with a ReLU between them.
pub(crate) fn mlp2(tape: &mut Tape, x: Var, layers: [(Var, Var); 2]) -> Result<Var> {
    let h = linear(tape, x, layers[0].0, layers[0].1)?;
    let h = tape.relu(h)?;
    linear(tape, h, layers[1].0, layers[1].1)
}
