//! Initial region features: TF-IDF-weighted category embeddings, an MLP,
//! and one head of self-attention across regions.

use super::types::PoiMatrix;
use crate::diffmath::{glorot, Bound, ParamStore, Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{init_linear, mlp2};

/// Row-normalised TF-IDF weights (`J x C`). Zero-POI regions give zero rows.
///
/// `tf = count / row total`, `idf = ln((1 + J) / (1 + df)) + 1`.
pub fn tfidf(poi: &PoiMatrix) -> Tensor {
    let counts = poi.counts();
    let (j, c) = counts.shape();
    let idf: Vec<f64> = (0..c)
        .map(|k| {
            let df = (0..j).filter(|&r| counts.get(r, k) > 0.0).count() as f64;
            ((1.0 + j as f64) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let mut out = Tensor::zeros(j, c);
    for r in 0..j {
        let total: f64 = counts.row(r).iter().sum();
        if total == 0.0 {
            continue;
        }
        let row = out.row_mut(r);
        for k in 0..c {
            row[k] = counts.get(r, k) / total * idf[k];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Subtracts the mean category vector from every row.
pub fn center_rows(cat_embs: &Tensor) -> Tensor {
    let (c, d) = cat_embs.shape();
    let mean: Vec<f64> = (0..d).map(|k| (0..c).map(|i| cat_embs.get(i, k)).sum::<f64>() / c as f64).collect();
    Tensor::from_fn(c, d, |i, k| cat_embs.get(i, k) - mean[k])
}

/// TF-IDF-weighted sum of mean-centered category embeddings
/// (`J x d_poi`); the constant input to [`PoiEmbedder`].
///
/// Skip-gram vectors trained on a small, dense category vocabulary share a
/// dominant common direction; centering removes it so regions with
/// different category mixes get different contexts.
pub fn poi_context(poi: &PoiMatrix, cat_embs: &Tensor) -> Result<Tensor> {
    if cat_embs.rows() != poi.num_categories() {
        return Err(Error::shape("poi_context", format!("{} category embeddings for {} categories", cat_embs.rows(), poi.num_categories())));
    }
    tfidf(poi).matmul(&center_rows(cat_embs))
}

/// Two-layer MLP from POI context vectors to region embeddings.
#[derive(Clone, Copy, Debug)]
pub struct PoiEmbedder {
    pub d_in: usize,
    pub d: usize,
}

impl PoiEmbedder {
    pub fn init(store: &mut ParamStore, rng: &mut Rng, d_in: usize, d: usize) -> Result<Self> {
        init_linear(store, rng, "poi.l1", d_in, d)?;
        init_linear(store, rng, "poi.l2", d, d)?;
        Ok(PoiEmbedder { d_in, d })
    }

    /// `Ē = MLP(context)`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, context: Var) -> Result<Var> {
        mlp2(tape, context, [(p.get("poi.l1.w"), p.get("poi.l1.b")), (p.get("poi.l2.w"), p.get("poi.l2.b"))])
    }
}

/// Region embeddings `Ē` from POI counts and category embeddings.
pub fn region_poi_embed(tape: &mut Tape, p: &Bound, embedder: &PoiEmbedder, poi: &PoiMatrix, cat_embs: &Tensor) -> Result<Var> {
    let ctx = tape.constant(poi_context(poi, cat_embs)?);
    embedder.forward(tape, p, ctx)
}

/// Single-head scaled dot-product attention over regions with a residual
/// connection: `E = Ē + softmax(Q Kᵀ / √d) V`.
#[derive(Clone, Copy, Debug)]
pub struct SelfAttention {
    pub d: usize,
}

impl SelfAttention {
    pub fn init(store: &mut ParamStore, rng: &mut Rng, d: usize) -> Result<Self> {
        for name in ["attn.q", "attn.k", "attn.v"] {
            store.insert(name, glorot(rng, d, d))?;
        }
        Ok(SelfAttention { d })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, ebar: Var) -> Result<Var> {
        let q = tape.matmul(ebar, p.get("attn.q"))?;
        let k = tape.matmul(ebar, p.get("attn.k"))?;
        let v = tape.matmul(ebar, p.get("attn.v"))?;
        let scores = tape.matmul_nt(q, k)?;
        let scaled = tape.scale(scores, 1.0 / (self.d as f64).sqrt())?;
        let weights = tape.softmax_rows(scaled)?;
        let mixed = tape.matmul(weights, v)?;
        tape.add(ebar, mixed)
    }
}

/// Alias matching the pipeline step name.
pub fn self_attention_init(tape: &mut Tape, p: &Bound, attn: &SelfAttention, ebar: Var) -> Result<Var> {
    attn.forward(tape, p, ebar)
}
