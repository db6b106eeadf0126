use super::tape::{Tape, Var};
use crate::error::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("temperature must be positive, got {tau}")))
    }
}

pub(crate) fn reject_zero_rows(tape: &Tape, v: Var, op: &'static str) -> Result<()> {
    let zero = tape.value(v).zero_rows();
    if zero.is_empty() {
        Ok(())
    } else {
        Err(Error::degenerate(op, format!("rows {zero:?} have zero norm")))
    }
}

/// Row-aligned InfoNCE with cosine similarity, averaged over anchors.
///
/// Row `j` of `candidates` is the positive for row `j` of `anchors`; every
/// other candidate row is a negative.
pub fn info_nce(tape: &mut Tape, anchors: Var, candidates: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let (a, c) = (tape.value(anchors), tape.value(candidates));
    if a.shape() != c.shape() || a.rows() == 0 {
        return Err(Error::shape("info_nce", format!("{:?} vs {:?}", a.shape(), c.shape())));
    }
    reject_zero_rows(tape, anchors, "info_nce")?;
    reject_zero_rows(tape, candidates, "info_nce")?;
    let an = tape.normalize_rows(anchors);
    let cn = tape.normalize_rows(candidates);
    let sim = tape.matmul_nt(an, cn)?;
    let logits = tape.scale(sim, 1.0 / tau)?;
    let lse = tape.logsumexp_rows(logits)?;
    let pos = tape.diag(logits)?;
    let per_anchor = tape.sub(lse, pos)?;
    tape.mean(per_anchor)
}

/// Per-row `exp(cos(a_j, b_j) / tau)`, as `n x 1`.
pub fn exp_cosine(tape: &mut Tape, a: Var, b: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let an = tape.normalize_rows(a);
    let bn = tape.normalize_rows(b);
    let cos = tape.row_dot(an, bn)?;
    let scaled = tape.scale(cos, 1.0 / tau)?;
    tape.exp(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tensor;

    fn eval(a: Tensor, c: Tensor, tau: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let av = tape.constant(a);
        let cv = tape.constant(c);
        let l = info_nce(&mut tape, av, cv, tau)?;
        Ok(tape.value(l).item())
    }

    #[test]
    fn single_candidate_is_zero() {
        let v = Tensor::from_rows(&[[1.0, 0.0]]);
        assert_eq!(eval(v.clone(), v, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_pairs() {
        let l1 = eval(Tensor::eye(2), Tensor::eye(2), 1.0).unwrap();
        assert!((l1 - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
        assert!((l1 - 0.31326).abs() < 1e-5);
        let l2 = eval(Tensor::eye(2), Tensor::eye(2), 0.5).unwrap();
        assert!((l2 - (1.0 + (-2f64).exp()).ln()).abs() < 1e-12);
        assert!((l2 - 0.12693).abs() < 1e-5);
    }

    #[test]
    fn errors() {
        let z = Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(eval(z, Tensor::eye(2), 1.0), Err(Error::Degenerate { .. })));
        assert!(matches!(eval(Tensor::eye(2), Tensor::eye(2), 0.0), Err(Error::Config(_))));
        assert!(matches!(eval(Tensor::eye(2), Tensor::eye(3), 1.0), Err(Error::Shape { .. })));
    }
}
