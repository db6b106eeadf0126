//! Variational augmentation: Gaussian reparameterization of node embeddings,
//! an inner-product structure decoder and the two losses built on them.

use std::rc::Rc;

use crate::diffmath::{gaussian_matrix, info_nce, Bound, ParamStore, Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{init_linear, mlp2};

/// Tape handles of the mean and std heads, each two `(W, b)` layers.
#[derive(Clone, Copy, Debug)]
pub struct VgaeVars {
    pub mean: [(Var, Var); 2],
    pub std: [(Var, Var); 2],
}

impl VgaeVars {
    pub fn from_bound(p: &Bound) -> Self {
        let layer = |head: &str, l: usize| (p.get(&format!("vgae.{head}.l{l}.w")), p.get(&format!("vgae.{head}.l{l}.b")));
        VgaeVars {
            mean: [layer("mean", 1), layer("mean", 2)],
            std: [layer("std", 1), layer("std", 2)],
        }
    }
}

/// Registers both heads (`d -> d -> d`) under `vgae.*`.
pub fn init_vgae(store: &mut ParamStore, rng: &mut Rng, d: usize) -> Result<()> {
    for head in ["mean", "std"] {
        init_linear(store, rng, &format!("vgae.{head}.l1"), d, d)?;
        init_linear(store, rng, &format!("vgae.{head}.l2"), d, d)?;
    }
    Ok(())
}

/// `noise ⊙ softplus(std(h)) + mean(h)` for a fixed standard-normal `noise`.
pub fn reparameterize_with(tape: &mut Tape, h: Var, vars: &VgaeVars, noise: &Tensor) -> Result<Var> {
    let mean = mlp2(tape, h, vars.mean)?;
    let raw = mlp2(tape, h, vars.std)?;
    let std = tape.softplus(raw)?;
    if noise.shape() != tape.value(std).shape() {
        return Err(Error::shape("reparameterize", format!("noise {:?} for {:?}", noise.shape(), tape.value(std).shape())));
    }
    let g = tape.constant(noise.clone());
    let spread = tape.mul(g, std)?;
    tape.add(spread, mean)
}

/// Draws the noise from `rng` and calls [`reparameterize_with`].
pub fn reparameterize(tape: &mut Tape, h: Var, vars: &VgaeVars, rng: &mut Rng) -> Result<Var> {
    let (r, c) = tape.value(h).shape();
    let noise = gaussian_matrix(rng, r, c, 0.0, 1.0);
    reparameterize_with(tape, h, vars, &noise)
}

/// Edge probabilities `sigmoid(h̃ h̃ᵀ)` with a zero diagonal.
pub fn decode_structure(tape: &mut Tape, htilde: Var) -> Result<Var> {
    let n = tape.value(htilde).rows();
    let logits = tape.matmul_nt(htilde, htilde)?;
    let probs = tape.sigmoid(logits)?;
    let mask = tape.constant(Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 }));
    tape.mul(probs, mask)
}

/// Contrast between two independent reparameterized draws.
pub fn vgae_loss(tape: &mut Tape, htilde: Var, htilde_prime: Var, tau: f64) -> Result<Var> {
    info_nce(tape, htilde, htilde_prime, tau)
}

/// Per-entry weights for the reconstruction loss: zero on the diagonal,
/// `#non-edges / #edges` on edges and one on non-edges. If either class is
/// empty every off-diagonal entry gets weight one.
pub fn recon_weights(a: &Tensor) -> Tensor {
    let n = a.rows();
    let off = n * n.saturating_sub(1);
    let pos = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && a.get(i, j) > 0.5).count();
    let neg = off - pos;
    let pos_weight = if pos == 0 || neg == 0 { 1.0 } else { neg as f64 / pos as f64 };
    Tensor::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if a.get(i, j) > 0.5 {
            pos_weight
        } else {
            1.0
        }
    })
}

/// Class-weighted binary cross-entropy between decoded probabilities and the
/// fused adjacency, over off-diagonal entries.
pub fn recon_loss(tape: &mut Tape, atilde: Var, a: &Tensor) -> Result<Var> {
    let shape = tape.value(atilde).shape();
    if shape != a.shape() || shape.0 != shape.1 {
        return Err(Error::shape("recon_loss", format!("{shape:?} vs adjacency {:?}", a.shape())));
    }
    if shape.0 < 2 {
        return Err(Error::degenerate("recon_loss", "needs at least two nodes"));
    }
    tape.weighted_bce(atilde, Rc::new(a.clone()), Rc::new(recon_weights(a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::gradcheck::check_gradients;

    const SIGMOID_ONE: f64 = 0.731_058_578_630_004_9;

    fn store(d: usize, seed: u64) -> ParamStore {
        let mut s = ParamStore::new();
        init_vgae(&mut s, &mut Rng::new(seed), d).unwrap();
        s
    }

    #[test]
    fn vanishing_noise_limit() {
        let mut s = store(3, 1);
        s.set("vgae.std.l2.w", Tensor::zeros(3, 3)).unwrap();
        s.set("vgae.std.l2.b", Tensor::filled(1, 3, -40.0)).unwrap();
        let mut tape = Tape::new();
        let p = s.bind_constant(&mut tape);
        let vars = VgaeVars::from_bound(&p);
        let h = tape.constant(gaussian_matrix(&mut Rng::new(2), 4, 3, 0.0, 1.0));
        let ht = reparameterize(&mut tape, h, &vars, &mut Rng::new(3)).unwrap();
        let mean = mlp2(&mut tape, h, vars.mean).unwrap();
        let diff = tape.value(ht).zip_map(tape.value(mean), |a, b| a - b).max_abs();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn same_seed_same_draw() {
        let s = store(3, 1);
        let draw = || {
            let mut tape = Tape::new();
            let p = s.bind_constant(&mut tape);
            let h = tape.constant(Tensor::ones(2, 3));
            let v = reparameterize(&mut tape, h, &VgaeVars::from_bound(&p), &mut Rng::new(9)).unwrap();
            tape.value(v).clone()
        };
        assert_eq!(draw(), draw());
    }

    /// Mean and std of one entry over many draws versus the head outputs.
    fn entry_moments(s: &ParamStore, draws: usize, seed: u64) -> (f64, f64, f64, f64) {
        let mut tape = Tape::new();
        let p = s.bind_constant(&mut tape);
        let vars = VgaeVars::from_bound(&p);
        let h = tape.constant(Tensor::from_rows(&[[0.3, -0.2, 0.5]]));
        let mean_var = mlp2(&mut tape, h, vars.mean).unwrap();
        let mean = tape.value(mean_var).get(0, 0);
        let raw = mlp2(&mut tape, h, vars.std).unwrap();
        let sp = tape.softplus(raw).unwrap();
        let std = tape.value(sp).get(0, 0);
        let mut rng = Rng::new(seed);
        let samples: Vec<f64> = (0..draws)
            .map(|_| {
                let v = reparameterize(&mut tape, h, &vars, &mut rng).unwrap();
                tape.value(v).get(0, 0)
            })
            .collect();
        let m = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
        (m, var.sqrt(), mean, std)
    }

    #[test]
    fn sample_moments_match_heads() {
        let (m, sd, mean, std) = entry_moments(&store(3, 4), 100_000, 17);
        assert!((m - mean).abs() <= 3.0 * std / 100.0, "{m} vs {mean}");
        assert!((sd - std).abs() <= 0.01 * std, "{sd} vs {std}");
    }

    #[test]
    fn larger_std_output_larger_variance() {
        let mut s = store(3, 4);
        let (_, low, _, _) = entry_moments(&s, 10_000, 5);
        let b = s.value("vgae.std.l2.b").map(|v| v + 1.0);
        s.set("vgae.std.l2.b", b).unwrap();
        let (_, high, _, _) = entry_moments(&s, 10_000, 5);
        assert!(high > low);
    }

    fn decode(rows: &[[f64; 2]]) -> Tensor {
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::from_rows(rows));
        let a = decode_structure(&mut tape, h).unwrap();
        tape.value(a).clone()
    }

    #[test]
    fn decoder_scalar_cases() {
        assert_eq!(decode(&[[1.0, 0.0], [0.0, 1.0]]).get(0, 1), 0.5);
        assert!((decode(&[[1.0, 0.0], [1.0, 0.0]]).get(0, 1) - SIGMOID_ONE).abs() < 1e-12);
        assert!((decode(&[[1.0, 0.0], [-1.0, 0.0]]).get(0, 1) - (1.0 - SIGMOID_ONE)).abs() < 1e-12);
        let a = decode(&[[0.3, 1.0], [-2.0, 0.1]]);
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn decoder_symmetric_random() {
        let mut rng = Rng::new(3);
        let mut tape = Tape::new();
        let h = tape.constant(gaussian_matrix(&mut rng, 7, 4, 0.0, 1.0));
        let a = decode_structure(&mut tape, h).unwrap();
        let a = tape.value(a);
        assert_eq!(a, &a.transpose());
        assert!((0..7).all(|i| a.get(i, i) == 0.0));
    }

    #[test]
    fn contrastive_cases() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let l = vgae_loss(&mut tape, i2, i2, 1.0).unwrap();
        assert!((tape.value(l).item() - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        let one = tape.constant(Tensor::from_rows(&[[0.4, 2.0]]));
        let l = vgae_loss(&mut tape, one, one, 0.4).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        let mut rng = Rng::new(6);
        for _ in 0..100 {
            let a = tape.constant(gaussian_matrix(&mut rng, 5, 3, 0.0, 1.0));
            let b = tape.constant(gaussian_matrix(&mut rng, 5, 3, 0.0, 1.0));
            let l = vgae_loss(&mut tape, a, b, 0.4).unwrap();
            assert!(tape.value(l).item() >= 0.0);
        }
    }

    fn recon(p: Tensor, a: &Tensor) -> f64 {
        let mut tape = Tape::new();
        let pv = tape.constant(p);
        let l = recon_loss(&mut tape, pv, a).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn recon_cases() {
        let a = Tensor::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let near = a.map(|v| if v > 0.5 { 1.0 - 1e-7 } else { 1e-7 });
        assert!(recon(near, &a) < 1e-5);
        let half = recon(Tensor::filled(3, 3, 0.5), &a);
        assert!((half - std::f64::consts::LN_2).abs() < 1e-12);
        let pair = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let single = recon(Tensor::filled(2, 2, SIGMOID_ONE), &pair);
        assert!((single - 0.313_261_687_518_222_8).abs() < 1e-9);
    }

    #[test]
    fn gradients_through_both_losses() {
        let d = 3;
        let s = store(d, 12);
        let mut rng = Rng::new(13);
        let h = gaussian_matrix(&mut rng, 6, d, 0.0, 1.0);
        let g1 = gaussian_matrix(&mut rng, 6, d, 0.0, 1.0);
        let g2 = gaussian_matrix(&mut rng, 6, d, 0.0, 1.0);
        let mut a = Tensor::zeros(6, 6);
        for (i, j) in [(0, 1), (1, 2), (3, 4), (2, 5)] {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        let names: Vec<String> = s.names().map(String::from).collect();
        let inputs: Vec<Tensor> = names.iter().map(|n| s.value(n).clone()).collect();
        let err = check_gradients(&inputs, |t, v| {
            let find = |n: &str| v[names.iter().position(|x| x == n).unwrap()];
            let layer = |head: &str, l: usize| (find(&format!("vgae.{head}.l{l}.w")), find(&format!("vgae.{head}.l{l}.b")));
            let vars = VgaeVars { mean: [layer("mean", 1), layer("mean", 2)], std: [layer("std", 1), layer("std", 2)] };
            let hv = t.constant(h.clone());
            let x1 = reparameterize_with(t, hv, &vars, &g1)?;
            let x2 = reparameterize_with(t, hv, &vars, &g2)?;
            let lv = vgae_loss(t, x1, x2, 0.5)?;
            let at = decode_structure(t, x1)?;
            let lr = recon_loss(t, at, &a)?;
            t.add(lv, lr)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
