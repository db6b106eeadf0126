use std::collections::BTreeMap;

use crate::diffmath::{Rng, Tensor};
use crate::error::{Error, Result};

pub const KMEANS_RESTARTS: usize = 50;
pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(x: &Tensor, k: usize, rng: &mut Rng) -> Clustering {
    let (n, d) = x.shape();
    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = vec![x.row(rng.below(n)).to_vec()];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centers[0])).collect();
    while centers.len() < k {
        let next = if nearest.iter().sum::<f64>() > 0.0 { rng.weighted_index(&nearest) } else { rng.below(n) };
        let c = x.row(next).to_vec();
        for (i, m) in nearest.iter_mut().enumerate() {
            *m = m.min(sq_dist(x.row(i), &c));
        }
        centers.push(c);
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for i in 0..n {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(x.row(i), &centers[a]).total_cmp(&sq_dist(x.row(i), &centers[b])))
                .unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous center.
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), &centers[labels[i]])).sum();
    Clustering { labels, inertia }
}

/// Lowest-inertia k-means++ run over `restarts` seeded restarts.
pub fn kmeans(x: &Tensor, k: usize, restarts: usize, rng: &mut Rng) -> Result<Clustering> {
    if k == 0 || k > x.rows() {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {} rows, got {k}", x.rows())));
    }
    let mut best: Option<Clustering> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(x, k, rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two constant labelings count as perfect agreement.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("nmi", format!("{} vs {} labels", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let (ha, hb) = (entropy(ca.values().copied(), n), entropy(cb.values().copied(), n));
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    Ok((mi / (0.5 * (ha + hb))).clamp(0.0, 1.0))
}

/// k-means NMI of `embeddings` against `truth`, with `k` = number of
/// distinct truth labels.
pub fn community_nmi(embeddings: &Tensor, truth: &[usize], seed: u64) -> Result<f64> {
    let k = truth.iter().collect::<std::collections::BTreeSet<_>>().len();
    let mut rng = Rng::new(seed).substream("eval.kmeans");
    let c = kmeans(embeddings, k, KMEANS_RESTARTS, &mut rng)?;
    nmi(&c.labels, truth)
}
