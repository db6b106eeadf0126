use std::collections::BTreeSet;

use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::region::{DistanceMatrix, TrajectorySet};

/// Undirected edges as `(a, b)` with `a < b`, sorted and free of duplicates.
pub type EdgeList = Vec<(usize, usize)>;

pub(crate) fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Connects regions whose embedding cosine strictly exceeds `epsilon`.
pub fn build_poi_graph(ebar: &Tensor, epsilon: f64) -> Result<EdgeList> {
    if !(epsilon > -1.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("POI threshold must lie in (-1, 1), got {epsilon}")));
    }
    if let Some(&r) = ebar.zero_rows().first() {
        return Err(Error::degenerate("build_poi_graph", format!("region {r} has a zero embedding")));
    }
    let n = ebar.rows();
    let norms: Vec<f64> = (0..n)
        .map(|i| ebar.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = ebar.row(i).iter().zip(ebar.row(j)).map(|(a, b)| a * b).sum();
            if dot / (norms[i] * norms[j]) > epsilon {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

/// Index of mobility node `(region, slot)` inside the mobility block.
pub fn mobility_index(region: usize, slot: usize, slots: usize) -> usize {
    region * slots + slot
}

/// One undirected edge per distinct trip endpoint pair; multiplicity is dropped.
pub fn build_mobility_graph(traj: &TrajectorySet) -> EdgeList {
    let t = traj.slots();
    let set: BTreeSet<(usize, usize)> = traj
        .trips()
        .iter()
        .map(|r| {
            ordered(
                mobility_index(r.src_region, r.src_slot, t),
                mobility_index(r.dst_region, r.dst_slot, t),
            )
        })
        .filter(|(a, b)| a != b)
        .collect();
    set.into_iter().collect()
}

/// Connects distinct regions with `0 < dist <= radius`.
pub fn build_spatial_graph(dist: &DistanceMatrix, radius: f64) -> Result<EdgeList> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("spatial radius must be positive, got {radius}")));
    }
    let n = dist.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = dist.get(i, j);
            if d > 0.0 && d <= radius {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}
