//! Skip-gram with negative sampling over POI categories.
//!
//! Each region is one context window: every ordered pair of distinct
//! categories present in the region is a positive pair, weighted by the
//! smaller of the two counts. Negatives come from the unigram distribution
//! raised to 0.75.

use std::collections::BTreeMap;

use super::types::PoiMatrix;
use crate::diffmath::{Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 96,
            epochs: 50,
            negatives: 5,
            learning_rate: 0.025,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains category embeddings (`C x dim`) from the POI co-occurrence corpus.
pub fn skipgram_train(poi: &PoiMatrix, cfg: &SkipGramConfig, rng: &mut Rng) -> Result<Tensor> {
    let counts = poi.counts();
    if counts.data().iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate("skipgram_train", "POI matrix is all zeros"));
    }
    if cfg.dim == 0 {
        return Err(Error::Config("skip-gram dimension must be positive".into()));
    }
    let c = poi.num_categories();
    let d = cfg.dim;
    let half = 0.5 / d as f64;
    let mut input = Tensor::from_fn(c, d, |_, _| rng.uniform_in(-half, half));
    if c < 2 {
        return Ok(input);
    }
    let mut output = Tensor::zeros(c, d);

    // Aggregated over regions so the corpus does not depend on region order.
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in 0..poi.regions() {
        let row = counts.row(r);
        let present: Vec<usize> = (0..c).filter(|&k| row[k] > 0.0).collect();
        for &a in &present {
            for &b in &present {
                if a != b {
                    *weights.entry((a, b)).or_default() += row[a].min(row[b]);
                }
            }
        }
    }
    let mut pairs: Vec<(usize, usize, f64)> = weights.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    if pairs.is_empty() {
        return Ok(input);
    }
    let mean_w = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;

    let noise: Vec<f64> = (0..c)
        .map(|k| (0..poi.regions()).map(|r| counts.get(r, k)).sum::<f64>().powf(0.75))
        .collect();

    let total_steps = (cfg.epochs * pairs.len()).max(1) as f64;
    let mut step = 0usize;
    let mut grad_in = vec![0.0; d];
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut pairs);
        for &(center, context, w) in pairs.iter() {
            let lr = cfg.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4) * (w / mean_w);
            step += 1;
            grad_in.iter_mut().for_each(|g| *g = 0.0);
            let update = |target: usize, label: f64, input: &Tensor, output: &mut Tensor, grad_in: &mut [f64]| {
                let dot: f64 = input.row(center).iter().zip(output.row(target)).map(|(a, b)| a * b).sum();
                let g = lr * (label - sigmoid(dot));
                for k in 0..d {
                    grad_in[k] += g * output.get(target, k);
                }
                let crow = input.row(center).to_vec();
                for (o, x) in output.row_mut(target).iter_mut().zip(crow) {
                    *o += g * x;
                }
            };
            update(context, 1.0, &input, &mut output, &mut grad_in);
            for _ in 0..cfg.negatives {
                let neg = rng.weighted_index(&noise);
                if neg == context || neg == center {
                    continue;
                }
                update(neg, 0.0, &input, &mut output, &mut grad_in);
            }
            for (x, g) in input.row_mut(center).iter_mut().zip(&grad_in) {
                *x += g;
            }
        }
    }
    input.check_finite("skipgram_train")?;
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    fn poi(rows: &[[f64; 7]]) -> PoiMatrix {
        let names = (0..7).map(|k| format!("c{k}")).collect();
        PoiMatrix::new(Tensor::from_rows(rows), names).unwrap()
    }

    #[test]
    fn shape_and_determinism() {
        let p = poi(&[[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 3.0], [0.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0]]);
        let cfg = SkipGramConfig { dim: 8, epochs: 5, ..Default::default() };
        let a = skipgram_train(&p, &cfg, &mut Rng::new(4)).unwrap();
        let b = skipgram_train(&p, &cfg, &mut Rng::new(4)).unwrap();
        assert_eq!(a.shape(), (7, 8));
        assert_eq!(a, b);
    }

    #[test]
    fn planted_cooccurrence() {
        let mut rows = Vec::new();
        for r in 0..12 {
            let mut row = [0.0; 7];
            if r % 2 == 0 {
                row[0] = 3.0;
                row[1] = 2.0;
                row[3 + (r / 2) % 2] = 1.0;
            } else {
                row[2] = 3.0;
                row[5 + (r / 2) % 2] = 2.0;
            }
            rows.push(row);
        }
        let p = poi(&rows);
        let cfg = SkipGramConfig { dim: 16, epochs: 50, ..Default::default() };
        for seed in 0..5 {
            let e = skipgram_train(&p, &cfg, &mut Rng::new(seed)).unwrap();
            let c01 = cosine(e.row(0), e.row(1));
            let c02 = cosine(e.row(0), e.row(2));
            assert!(c01 > c02, "seed {seed}: {c01} vs {c02}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        let zeros = poi(&[[0.0; 7]]);
        assert!(matches!(skipgram_train(&zeros, &SkipGramConfig::default(), &mut Rng::new(0)), Err(Error::Degenerate { .. })));
        let single = PoiMatrix::new(Tensor::from_rows(&[[2.0], [1.0]]), vec!["only".into()]).unwrap();
        let e = skipgram_train(&single, &SkipGramConfig { dim: 4, ..Default::default() }, &mut Rng::new(0)).unwrap();
        assert_eq!(e.shape(), (1, 4));
    }
}
