//! Layer-sum graph convolution over the fused graph.

use std::rc::Rc;

use crate::diffmath::{glorot, Bound, ParamStore, Rng, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::MultiViewGraph;

/// Square per-layer weights `enc.w0 .. enc.w{L-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub d: usize,
    pub depth: usize,
}

impl Encoder {
    pub fn init(store: &mut ParamStore, rng: &mut Rng, d: usize, depth: usize) -> Result<Self> {
        for l in 0..depth {
            store.insert(Self::weight_name(l), glorot(rng, d, d))?;
        }
        Ok(Encoder { d, depth })
    }

    pub fn weight_name(layer: usize) -> String {
        format!("enc.w{layer}")
    }

    pub fn weights(&self, p: &Bound) -> Vec<Var> {
        (0..self.depth).map(|l| p.get(&Self::weight_name(l))).collect()
    }
}

/// Copies region row `E_j` to every node of region `j`.
pub fn init_features(tape: &mut Tape, e: Var, g: &MultiViewGraph) -> Result<Var> {
    let rows = tape.value(e).rows();
    if rows != g.regions() {
        return Err(Error::shape("init_features", format!("{rows} feature rows for {} regions", g.regions())));
    }
    let groups: Vec<Vec<usize>> = g.nodes().iter().map(|n| vec![n.region]).collect();
    tape.gather_mean(e, Rc::new(groups))
}

/// `H = Σ_{l=0..L} H^l` with `H^0 = h0` and `H^l = relu(Â · H^{l-1} · W_{l-1}ᵀ)`.
pub fn propagate(tape: &mut Tape, anorm: Var, h0: Var, weights: &[Var]) -> Result<Var> {
    let mut layer = h0;
    let mut total = h0;
    for &w in weights {
        let mixed = tape.matmul_nt(layer, w)?;
        let spread = tape.matmul(anorm, mixed)?;
        layer = tape.relu(spread)?;
        total = tape.add(total, layer)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::gradcheck::check_gradients;
    use crate::diffmath::{gaussian_matrix, Tensor};
    use crate::graph::{fuse_views, View};

    #[test]
    fn features_follow_region_index() {
        let mut tape = Tape::new();
        let g1 = fuse_views(&vec![], &vec![], &vec![], 1, 1).unwrap();
        let e = tape.constant(Tensor::from_rows(&[[1.0, 2.0]]));
        let h = init_features(&mut tape, e, &g1).unwrap();
        assert_eq!(tape.value(h), &Tensor::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]));

        let g = fuse_views(&vec![], &vec![], &vec![], 2, 2).unwrap();
        let e = tape.constant(Tensor::from_rows(&[[1.0], [2.0]]));
        let h = init_features(&mut tape, e, &g).unwrap();
        let hv = tape.value(h);
        for j in 0..2 {
            let want = (j + 1) as f64;
            assert_eq!(hv.get(g.index_of(View::Poi, j, 0), 0), want);
            assert_eq!(hv.get(g.index_of(View::Spatial, j, 0), 0), want);
            for t in 0..2 {
                assert_eq!(hv.get(g.index_of(View::Mobility, j, t), 0), want);
            }
        }
        let bad = tape.constant(Tensor::zeros(3, 1));
        assert!(matches!(init_features(&mut tape, bad, &g), Err(Error::Shape { .. })));
    }

    #[test]
    fn depth_zero_and_zero_weights() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::filled(2, 2, 0.5));
        let h0 = tape.constant(Tensor::from_rows(&[[1.0, -1.0], [0.0, 2.0]]));
        let h = propagate(&mut tape, a, h0, &[]).unwrap();
        assert_eq!(tape.value(h), tape.value(h0));
        let z = tape.constant(Tensor::zeros(2, 2));
        let h = propagate(&mut tape, a, h0, &[z, z]).unwrap();
        assert_eq!(tape.value(h), tape.value(h0));
    }

    #[test]
    fn two_node_hand_evaluation() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::filled(2, 2, 0.5));
        let h0 = tape.constant(Tensor::from_rows(&[[1.0], [0.0]]));
        let w = tape.constant(Tensor::scalar(1.0));
        let h = propagate(&mut tape, a, h0, &[w]).unwrap();
        assert_eq!(tape.value(h), &Tensor::from_rows(&[[1.5], [0.5]]));
    }

    #[test]
    fn gradients_wrt_weights_and_adjacency() {
        let mut rng = Rng::new(21);
        for _ in 0..5 {
            let a = Tensor::from_fn(6, 6, |_, _| rng.uniform());
            let h0 = gaussian_matrix(&mut rng, 6, 3, 0.0, 1.0);
            let w0 = gaussian_matrix(&mut rng, 3, 3, 0.0, 1.0);
            let w1 = gaussian_matrix(&mut rng, 3, 3, 0.0, 1.0);
            let err = check_gradients(&[a, h0, w0, w1], |t, v| {
                let h = propagate(t, v[0], v[1], &[v[2], v[3]])?;
                Ok(t.sum(h))
            })
            .unwrap();
            assert!(err < 1e-6, "{err}");
        }
    }
}
