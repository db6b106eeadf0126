//! Region-aligned contrast between the POI, mobility and spatial blocks,
//! combined with learnable non-negative gates.

use std::rc::Rc;

use crate::diffmath::{info_nce, Bound, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{MultiViewGraph, View};

/// Per-view region embeddings, each `J x d`.
#[derive(Clone, Copy, Debug)]
pub struct ViewEmbeddings {
    pub poi: Var,
    pub mobility: Var,
    pub spatial: Var,
}

/// Splits node embeddings into view blocks, pooling mobility rows over
/// time slots by mean.
pub fn split_views(tape: &mut Tape, h: Var, g: &MultiViewGraph) -> Result<ViewEmbeddings> {
    let rows = tape.value(h).rows();
    if rows != g.len() {
        return Err(Error::shape("split_views", format!("{rows} rows for {} nodes", g.len())));
    }
    let (j, t) = (g.regions(), g.slots());
    let block = |view: View| -> Vec<Vec<usize>> { (0..j).map(|r| vec![g.index_of(view, r, 0)]).collect() };
    let pooled = (0..j).map(|r| (0..t).map(|s| g.index_of(View::Mobility, r, s)).collect()).collect();
    Ok(ViewEmbeddings {
        poi: tape.gather_mean(h, Rc::new(block(View::Poi)))?,
        mobility: tape.gather_mean(h, Rc::new(pooled))?,
        spatial: tape.gather_mean(h, Rc::new(block(View::Spatial)))?,
    })
}

pub fn pairwise_cl(tape: &mut Tape, ha: Var, hb: Var, tau: f64) -> Result<Var> {
    info_nce(tape, ha, hb, tau)
}

/// View pairs in the order the gates are stored.
pub const PAIRS: [&str; 3] = ["pm", "ms", "ps"];

pub fn gate_names(pair: &str) -> (String, String) {
    (format!("gate.{pair}.w"), format!("gate.{pair}.b"))
}

/// One `d -> 1` gate per view pair: zero weights, bias 1.
pub fn init_gates(store: &mut ParamStore, d: usize) -> Result<()> {
    for pair in PAIRS {
        let (w, b) = gate_names(pair);
        store.insert(w, Tensor::zeros(d, 1))?;
        store.insert(b, Tensor::scalar(1.0))?;
    }
    Ok(())
}

/// Gate handles `(w, b)` for the pairs in [`PAIRS`] order.
#[derive(Clone, Copy, Debug)]
pub struct GateVars(pub [(Var, Var); 3]);

impl GateVars {
    pub fn from_bound(p: &Bound) -> Self {
        let get = |k: usize| {
            let (w, b) = gate_names(PAIRS[k]);
            (p.get(&w), p.get(&b))
        };
        GateVars([get(0), get(1), get(2)])
    }
}

/// `relu(mean_j((ha_j ⊙ hb_j) · w + b))`, as `1 x 1`.
pub fn gate(tape: &mut Tape, ha: Var, hb: Var, w: Var, b: Var) -> Result<Var> {
    let prod = tape.mul(ha, hb)?;
    let lin = tape.matmul(prod, w)?;
    let lin = tape.add_row(lin, b)?;
    let m = tape.mean(lin)?;
    tape.relu(m)
}

/// `Σ γ_pair · L_pair` over the three view pairs.
pub fn cross_loss(tape: &mut Tape, v: &ViewEmbeddings, gates: &GateVars, tau: f64) -> Result<Var> {
    let pairs = [(v.poi, v.mobility), (v.mobility, v.spatial), (v.poi, v.spatial)];
    let mut total: Option<Var> = None;
    for ((ha, hb), (w, b)) in pairs.into_iter().zip(gates.0) {
        let g = gate(tape, ha, hb, w, b)?;
        let l = pairwise_cl(tape, ha, hb, tau)?;
        let term = tape.mul(g, l)?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.expect("three view pairs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::gradcheck::check_gradients;
    use crate::diffmath::{gaussian_matrix, Rng};
    use crate::graph::fuse_views;

    #[test]
    fn mobility_pooling() {
        let mut tape = Tape::new();
        let g = fuse_views(&vec![], &vec![], &vec![], 1, 2).unwrap();
        let h = tape.constant(Tensor::from_rows(&[[3.0, 3.0], [1.0, 0.0], [0.0, 1.0], [7.0, 7.0]]));
        let v = split_views(&mut tape, h, &g).unwrap();
        assert_eq!(tape.value(v.mobility), &Tensor::from_rows(&[[0.5, 0.5]]));
        assert_eq!(tape.value(v.poi), &Tensor::from_rows(&[[3.0, 3.0]]));
        assert_eq!(tape.value(v.spatial), &Tensor::from_rows(&[[7.0, 7.0]]));

        let g1 = fuse_views(&vec![], &vec![], &vec![], 2, 1).unwrap();
        let h = tape.constant(Tensor::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]));
        let v = split_views(&mut tape, h, &g1).unwrap();
        assert_eq!(tape.value(v.mobility), &Tensor::from_rows(&[[3.0], [4.0]]));
        let bad = tape.constant(Tensor::zeros(5, 1));
        assert!(split_views(&mut tape, bad, &g1).is_err());
    }

    #[test]
    fn pairwise_cases() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let l = pairwise_cl(&mut tape, i2, i2, 1.0).unwrap();
        assert!((tape.value(l).item() - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        let one = tape.constant(Tensor::from_rows(&[[1.0, -1.0]]));
        let l = pairwise_cl(&mut tape, one, one, 0.4).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    fn gate_value(ha: Tensor, hb: Tensor, w: Tensor, b: f64) -> f64 {
        let mut tape = Tape::new();
        let (ha, hb) = (tape.constant(ha), tape.constant(hb));
        let (w, b) = (tape.constant(w), tape.constant(Tensor::scalar(b)));
        let g = gate(&mut tape, ha, hb, w, b).unwrap();
        tape.value(g).item()
    }

    #[test]
    fn gate_cases() {
        let h = Tensor::from_rows(&[[1.0, 2.0], [3.0, -1.0]]);
        assert_eq!(gate_value(h.clone(), h.clone(), Tensor::zeros(2, 1), 1.0), 1.0);
        assert_eq!(gate_value(h.clone(), h.clone(), Tensor::zeros(2, 1), -1.0), 0.0);
        let hb = Tensor::from_rows(&[[0.5, 1.0], [-1.0, 2.0]]);
        let w = Tensor::from_rows(&[[0.3], [-0.2]]);
        // Products: [0.5, 2.0] and [-3.0, -2.0].
        let lin0: f64 = 0.5 * 0.3 - 2.0 * 0.2 + 0.1;
        let lin1: f64 = -3.0 * 0.3 + 2.0 * 0.2 + 0.1;
        let want = (0.5 * (lin0 + lin1)).max(0.0);
        assert!((gate_value(h.clone(), hb.clone(), w.clone(), 0.1) - want).abs() < 1e-15);
        let want = (0.5 * (lin0 + lin1) + 0.9).max(0.0);
        assert!((gate_value(h, hb, w, 1.0) - want).abs() < 1e-15);
    }

    fn views(tape: &mut Tape, rng: &mut Rng, j: usize, d: usize) -> ViewEmbeddings {
        ViewEmbeddings {
            poi: tape.constant(gaussian_matrix(rng, j, d, 0.0, 1.0)),
            mobility: tape.constant(gaussian_matrix(rng, j, d, 0.0, 1.0)),
            spatial: tape.constant(gaussian_matrix(rng, j, d, 0.0, 1.0)),
        }
    }

    fn gates(tape: &mut Tape, rng: &mut Rng, d: usize, bias: Option<f64>) -> GateVars {
        let mut one = || {
            let w = match bias {
                Some(_) => Tensor::zeros(d, 1),
                None => gaussian_matrix(rng, d, 1, 0.0, 0.3),
            };
            let b = bias.unwrap_or(0.8);
            (tape.constant(w), tape.constant(Tensor::scalar(b)))
        };
        GateVars([one(), one(), one()])
    }

    #[test]
    fn forced_gates() {
        let mut rng = Rng::new(2);
        let mut tape = Tape::new();
        let v = views(&mut tape, &mut rng, 4, 3);
        let off = gates(&mut tape, &mut rng, 3, Some(-1.0));
        let l = cross_loss(&mut tape, &v, &off, 0.4).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        let same = ViewEmbeddings { poi: v.poi, mobility: v.poi, spatial: v.poi };
        let on = gates(&mut tape, &mut rng, 3, Some(1.0));
        let l = cross_loss(&mut tape, &same, &on, 0.4).unwrap();
        let single = pairwise_cl(&mut tape, v.poi, v.poi, 0.4).unwrap();
        assert!((tape.value(l).item() - 3.0 * tape.value(single).item()).abs() < 1e-12);
    }

    #[test]
    fn decomposes_into_gated_pairs() {
        let mut rng = Rng::new(5);
        let mut tape = Tape::new();
        let v = views(&mut tape, &mut rng, 5, 3);
        let gs = gates(&mut tape, &mut rng, 3, None);
        let total = cross_loss(&mut tape, &v, &gs, 0.6).unwrap();
        let mut want = 0.0;
        for ((a, b), (w, bias)) in [(v.poi, v.mobility), (v.mobility, v.spatial), (v.poi, v.spatial)].into_iter().zip(gs.0) {
            let g = gate(&mut tape, a, b, w, bias).unwrap();
            let l = pairwise_cl(&mut tape, a, b, 0.6).unwrap();
            want += tape.value(g).item() * tape.value(l).item();
        }
        assert!((tape.value(total).item() - want).abs() < 1e-12);
        assert!(tape.value(total).item() >= 0.0);
    }

    #[test]
    fn region_permutation_invariance() {
        let mut rng = Rng::new(8);
        let mut tape = Tape::new();
        let v = views(&mut tape, &mut rng, 5, 3);
        let gs = gates(&mut tape, &mut rng, 3, None);
        let base = cross_loss(&mut tape, &v, &gs, 0.4).unwrap();
        let perm = Rc::new(vec![vec![3], vec![0], vec![4], vec![1], vec![2]]);
        let pv = ViewEmbeddings {
            poi: tape.gather_mean(v.poi, perm.clone()).unwrap(),
            mobility: tape.gather_mean(v.mobility, perm.clone()).unwrap(),
            spatial: tape.gather_mean(v.spatial, perm).unwrap(),
        };
        let permuted = cross_loss(&mut tape, &pv, &gs, 0.4).unwrap();
        assert!((tape.value(base).item() - tape.value(permuted).item()).abs() < 1e-12);
    }

    #[test]
    fn gradients_wrt_gates_and_views() {
        let mut rng = Rng::new(14);
        let (j, d) = (6, 3);
        let mut inputs: Vec<Tensor> = (0..3).map(|_| gaussian_matrix(&mut rng, j, d, 0.0, 1.0)).collect();
        for _ in 0..3 {
            inputs.push(gaussian_matrix(&mut rng, d, 1, 0.0, 0.3));
            inputs.push(Tensor::scalar(0.9));
        }
        let err = check_gradients(&inputs, |t, v| {
            let views = ViewEmbeddings { poi: v[0], mobility: v[1], spatial: v[2] };
            let gs = GateVars([(v[3], v[4]), (v[5], v[6]), (v[7], v[8])]);
            cross_loss(t, &views, &gs, 0.5)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
