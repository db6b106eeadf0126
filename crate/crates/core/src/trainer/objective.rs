use crate::diffmath::{exp_cosine, reject_zero_rows, Tape, Var};
use crate::error::Result;

/// `1` when the variational contrast exceeds `eps` (strictly), else `xi`.
pub fn infomin_reward(l_vgae: f64, eps: f64, xi: f64) -> f64 {
    if l_vgae > eps {
        1.0
    } else {
        xi
    }
}

/// Mean over nodes of `max(2 s1 - s2 - s3, 0)` with
/// `s1 = e(h̃, h̃')`, `s2 = e(h̃, h)` and `e(u, v) = exp(cos(u, v) / tau)`.
///
/// `s3` is `e(h̃', h)` by default; `literal` uses `e(h̃', h̃)` instead,
/// which makes `s3` equal to `s1`.
pub fn info_regularization(tape: &mut Tape, htilde: Var, htilde_prime: Var, h: Var, tau: f64, literal: bool) -> Result<Var> {
    for v in [htilde, htilde_prime, h] {
        reject_zero_rows(tape, v, "info_regularization")?;
    }
    let s1 = exp_cosine(tape, htilde, htilde_prime, tau)?;
    let s2 = exp_cosine(tape, htilde, h, tau)?;
    let s3 = if literal {
        exp_cosine(tape, htilde_prime, htilde, tau)?
    } else {
        exp_cosine(tape, htilde_prime, h, tau)?
    };
    let twice = tape.scale(s1, 2.0)?;
    let gap = tape.sub(twice, s2)?;
    let gap = tape.sub(gap, s3)?;
    let hinge = tape.relu(gap)?;
    tape.mean(hinge)
}

/// Scalar loss terms of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    pub l_vgae: f64,
    pub l_cross: f64,
    pub l_adv: f64,
    pub l_recon: f64,
    pub reward: f64,
    pub v_ir: f64,
}

/// `L_vgae + L_cross + L_adv + R·L_recon + λ·V_IR`.
pub fn total_loss(t: &LossTerms, lambda: f64) -> f64 {
    t.l_vgae + t.l_cross + t.l_adv + t.reward * t.l_recon + lambda * t.v_ir
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::gradcheck::check_gradients;
    use crate::diffmath::{gaussian_matrix, Rng, Tensor};
    use crate::error::Error;

    #[test]
    fn reward_cases() {
        assert_eq!(infomin_reward(1.5, 1.0, 0.01), 1.0);
        assert_eq!(infomin_reward(0.5, 1.0, 0.01), 0.01);
        assert_eq!(infomin_reward(1.0, 1.0, 0.01), 0.01);
    }

    fn v_ir(a: Tensor, b: Tensor, h: Tensor, tau: f64, literal: bool) -> Result<f64> {
        let mut tape = Tape::new();
        let (a, b, h) = (tape.constant(a), tape.constant(b), tape.constant(h));
        let v = info_regularization(&mut tape, a, b, h, tau, literal)?;
        Ok(tape.value(v).item())
    }

    #[test]
    fn regularizer_cases() {
        let x = Tensor::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]);
        assert_eq!(v_ir(x.clone(), x.clone(), x.clone(), 0.4, false).unwrap(), 0.0);
        let a = Tensor::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
        let h = Tensor::from_rows(&[[0.0, 1.0], [0.0, 2.0]]);
        let e = std::f64::consts::E;
        let got = v_ir(a.clone(), a.clone(), h.clone(), 1.0, false).unwrap();
        assert!((got - (2.0 * e - 2.0)).abs() < 1e-12, "{got}");
        // Views already farther from each other than from the original.
        let b = Tensor::from_rows(&[[-1.0, 0.0], [-1.0, 0.0]]);
        let near = Tensor::from_rows(&[[1.0, -1.0], [1.0, -1.0]]);
        assert_eq!(v_ir(a.clone(), b, near, 1.0, false).unwrap(), 0.0);
        // Literal form collapses to max(s1 - s2, 0).
        let lit = v_ir(a.clone(), a.clone(), h, 1.0, true).unwrap();
        assert!((lit - (e - 1.0)).abs() < 1e-12);
        let zero = Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(v_ir(zero, a.clone(), a, 1.0, false), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn total_cases() {
        let zero = LossTerms { l_vgae: 0.0, l_cross: 0.0, l_adv: 0.0, l_recon: 0.0, reward: 1.0, v_ir: 0.0 };
        assert_eq!(total_loss(&zero, 0.5), 0.0);
        let t = LossTerms { l_vgae: 1.0, l_cross: 2.0, l_adv: 3.0, l_recon: 4.0, reward: 1.0, v_ir: 9.0 };
        assert_eq!(total_loss(&t, 0.0), 10.0);
        let r = LossTerms { l_recon: 2.0, reward: 0.01, ..zero };
        assert!((total_loss(&r, 0.0) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn regularizer_gradient() {
        let mut rng = Rng::new(3);
        for literal in [false, true] {
            let xs: Vec<Tensor> = (0..3).map(|_| gaussian_matrix(&mut rng, 5, 3, 0.0, 1.0)).collect();
            let err = check_gradients(&xs, |t, v| info_regularization(t, v[0], v[1], v[2], 0.7, literal)).unwrap();
            assert!(err < 1e-6, "{err}");
        }
    }
}
