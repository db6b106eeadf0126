//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞, floor)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff = analytic.zip_map(numeric, |a, n| a - n).max_abs();
    let scale = analytic.max_abs().max(numeric.max_abs()).max(1e-7);
    diff / scale
}

/// Finite-difference gradient of the scalar produced by `build` w.r.t. each
/// input. The inputs are recorded as constants, so this never touches the
/// reverse-mode path.
pub fn numeric_gradients<F>(inputs: &[Tensor], h: f64, build: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(Error::shape("numeric_gradients", format!("output {:?}", v.shape())));
        }
        Ok(v.item())
    };
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].rows(), inputs[k].cols());
        for idx in 0..inputs[k].len() {
            let orig = work[k].data()[idx];
            work[k].data_mut()[idx] = orig + h;
            let fp = eval(&work)?;
            work[k].data_mut()[idx] = orig - h;
            let fm = eval(&work)?;
            work[k].data_mut()[idx] = orig;
            g.data_mut()[idx] = (fp - fm) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Reverse-mode gradients of `build` w.r.t. each input.
pub fn analytic_gradients<F>(inputs: &[Tensor], build: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars.iter().map(|v| grads.wrt(*v)).collect())
}

/// Largest relative error over all inputs of `build`.
pub fn check_gradients<F>(inputs: &[Tensor], build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(inputs, &build)?;
    let numeric = numeric_gradients(inputs, FD_STEP, &build)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max))
}
