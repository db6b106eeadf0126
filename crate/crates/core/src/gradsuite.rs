//! Seeded finite-difference checks over every differentiable building
//! block, shared by the command line and the test suites.

use crate::adversarial::AttackTarget;
use crate::crossview::{cross_loss, gate, split_views, GateVars};
use crate::diffmath::gradcheck::check_gradients;
use crate::diffmath::{gaussian_matrix, info_nce, Rng, Tape, Tensor, Var};
use crate::encoder::propagate;
use crate::error::Result;
use crate::graph::{fuse_views, normalize, normalize_on_tape};
use crate::trainer::info_regularization;
use crate::vgae::{decode_structure, recon_loss, reparameterize_with, vgae_loss, VgaeVars};

pub const GRADCHECK_TOL: f64 = 1e-5;

/// Worst relative error of one operation over its cases.
#[derive(Clone, Debug, PartialEq)]
pub struct OpReport {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOL
    }
}

/// Random linear read-out so every output entry gets a distinct weight.
fn probe(tape: &mut Tape, out: Var, rng: &mut Rng) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(gaussian_matrix(rng, r, c, 0.0, 1.0));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn random_adjacency(rng: &mut Rng, n: usize) -> Tensor {
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.bernoulli(0.4) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    a
}

/// Cases whose ReLU pre-activations come this close to zero are redrawn:
/// the derivative is undefined at the kink and finite differences there
/// measure a one-sided slope.
pub const KINK_MARGIN: f64 = 1e-4;

/// Smallest `|pre-activation|` over all propagation layers.
fn kink_margin(a: &Tensor, h0: &Tensor, weights: &[Tensor]) -> f64 {
    let anorm = normalize(a).into_matrix();
    let mut layer = h0.clone();
    let mut margin = f64::INFINITY;
    for w in weights {
        let spread = anorm.matmul(&layer.matmul(&w.transpose()).expect("square weights")).expect("n x n");
        margin = spread.data().iter().fold(margin, |m, v| m.min(v.abs()));
        layer = spread.map(|v| v.max(0.0));
    }
    margin
}

fn case(op: &'static str, rng: &mut Rng) -> Result<f64> {
    let n = 2 + rng.below(7);
    let d = 2 + rng.below(3);
    let tau = rng.uniform_in(0.3, 1.5);
    let probe_seed = rng.below(1 << 30) as u64;
    let g = |rng: &mut Rng, r, c| gaussian_matrix(rng, r, c, 0.0, 1.0);
    let readout = move |tape: &mut Tape, out: Var| probe(tape, out, &mut Rng::new(probe_seed));
    match op {
        "matmul_chain" => {
            let inputs = [g(rng, n, d), g(rng, d, d + 1), g(rng, n, d + 1)];
            check_gradients(&inputs, |t, v| {
                let ab = t.matmul(v[0], v[1])?;
                let abc = t.matmul_t(ab, true, v[2], false)?;
                let out = t.matmul_nt(v[2], abc)?;
                readout(t, out)
            })
        }
        "info_nce" => {
            let inputs = [g(rng, n, d), g(rng, n, d)];
            check_gradients(&inputs, |t, v| info_nce(t, v[0], v[1], tau))
        }
        "normalize" => {
            let a = random_adjacency(rng, n).zip_map(&g(rng, n, n), |x, e| x + 0.1 * e.abs());
            check_gradients(&[a], |t, v| {
                let out = normalize_on_tape(t, v[0])?;
                readout(t, out)
            })
        }
        "propagate" => {
            let inputs = loop {
                let inputs = [random_adjacency(rng, n), g(rng, n, d), g(rng, d, d), g(rng, d, d)];
                if kink_margin(&inputs[0], &inputs[1], &inputs[2..]) > KINK_MARGIN {
                    break inputs;
                }
            };
            check_gradients(&inputs, |t, v| {
                let anorm = normalize_on_tape(t, v[0])?;
                let out = propagate(t, anorm, v[1], &v[2..])?;
                readout(t, out)
            })
        }
        "reparameterize" => {
            let noise = g(rng, n, d);
            let mut inputs = vec![g(rng, n, d)];
            for _ in 0..4 {
                inputs.push(g(rng, d, d).scale(0.7));
                inputs.push(g(rng, 1, d).scale(0.3));
            }
            check_gradients(&inputs, |t, v| {
                let vars = VgaeVars { mean: [(v[1], v[2]), (v[3], v[4])], std: [(v[5], v[6]), (v[7], v[8])] };
                let out = reparameterize_with(t, v[0], &vars, &noise)?;
                readout(t, out)
            })
        }
        "vgae_loss" => {
            let inputs = [g(rng, n, d), g(rng, n, d)];
            check_gradients(&inputs, |t, v| vgae_loss(t, v[0], v[1], tau))
        }
        "recon_loss" => {
            let a = random_adjacency(rng, n);
            check_gradients(&[g(rng, n, d)], |t, v| {
                let p = decode_structure(t, v[0])?;
                recon_loss(t, p, &a)
            })
        }
        "gate" => {
            let inputs = [g(rng, n, d), g(rng, n, d), g(rng, d, 1).scale(0.3), Tensor::scalar(rng.uniform_in(0.5, 1.5))];
            check_gradients(&inputs, |t, v| gate(t, v[0], v[1], v[2], v[3]))
        }
        "cross_loss" => {
            // Two regions, two slots: eight fused nodes.
            let graph = fuse_views(&vec![(0, 1)], &vec![(0, 3)], &vec![(0, 1)], 2, 2)?;
            let mut inputs = vec![g(rng, graph.len(), d)];
            for _ in 0..3 {
                inputs.push(g(rng, d, 1).scale(0.3));
                inputs.push(Tensor::scalar(rng.uniform_in(0.5, 1.5)));
            }
            check_gradients(&inputs, |t, v| {
                let views = split_views(t, v[0], &graph)?;
                cross_loss(t, &views, &GateVars([(v[1], v[2]), (v[3], v[4]), (v[5], v[6])]), tau)
            })
        }
        "info_regularization" => {
            let literal = rng.bernoulli(0.5);
            let inputs = [g(rng, n, d), g(rng, n, d), g(rng, n, d)];
            check_gradients(&inputs, |t, v| info_regularization(t, v[0], v[1], v[2], tau, literal))
        }
        "adversarial_objective" => {
            let a = random_adjacency(rng, n);
            let h0 = g(rng, n, d);
            let weights = [g(rng, d, d), g(rng, d, d)];
            let reference = g(rng, n, d);
            let target = AttackTarget { adjacency: &a, h0: &h0, weights: &weights, reference: &reference, tau };
            let ledge = g(rng, n, n).map(|e| 0.3 * e.abs().min(2.0));
            let inputs = [ledge, g(rng, n, d).scale(0.05)];
            check_gradients(&inputs, |t, v| target.objective(t, v[0], v[1]))
        }
        other => unreachable!("unknown op {other}"),
    }
}

pub const SUITE_OPS: [&str; 11] = [
    "matmul_chain",
    "info_nce",
    "normalize",
    "propagate",
    "reparameterize",
    "vgae_loss",
    "recon_loss",
    "gate",
    "cross_loss",
    "info_regularization",
    "adversarial_objective",
];

/// Runs `cases` seeded checks per operation, fused graphs of at most ten
/// nodes.
pub fn run_gradcheck_suite(cases: usize, seed: u64) -> Result<Vec<OpReport>> {
    SUITE_OPS
        .iter()
        .map(|&op| {
            let mut rng = Rng::new(seed).substream(op);
            let mut worst: f64 = 0.0;
            for _ in 0..cases {
                worst = worst.max(case(op, &mut rng)?);
            }
            Ok(OpReport { op, cases, max_rel_error: worst })
        })
        .collect()
}
