//! Synthetic cities with planted community structure.
//!
//! Regions are split evenly into `k` latent communities. Each community has
//! its own spatial cluster, POI category profile, preferred departure slot
//! and label offset, and trips stay inside the community with probability
//! `1 - noise`.

use super::types::{
    Dataset, DistanceMatrix, LabelSeries, PoiMatrix, RegionSet, TrajectorySet, Trip,
};
use crate::diffmath::{Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub regions: usize,
    pub categories: usize,
    pub slots: usize,
    pub communities: usize,
    /// Fraction of signal replaced by uniform noise, in `[0, 1]`.
    pub noise: f64,
    pub trips_per_region: usize,
    pub series_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            regions: 50,
            categories: 12,
            slots: 4,
            communities: 4,
            noise: 0.1,
            trips_per_region: 8,
            series_len: 24,
        }
    }
}

const CLUSTER_RADIUS: f64 = 2.0;
const CLUSTER_SPREAD: f64 = 0.6;

fn poisson(rng: &mut Rng, lambda: f64) -> f64 {
    let limit = (-lambda).exp();
    let mut k = 0.0;
    let mut p = rng.uniform();
    while p > limit {
        k += 1.0;
        p *= rng.uniform();
    }
    k
}

/// Generates a complete dataset, including labels, density series and the
/// planted community of every region.
pub fn synth_city(cfg: &SynthConfig) -> Result<Dataset> {
    let (j, c, t, k) = (cfg.regions, cfg.categories, cfg.slots, cfg.communities);
    if k == 0 || j < k {
        return Err(Error::Config(format!("need regions >= communities >= 1, got {j} and {k}")));
    }
    if c == 0 || t == 0 {
        return Err(Error::Config("categories and slots must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::Config(format!("noise must lie in [0, 1], got {}", cfg.noise)));
    }
    let root = Rng::new(cfg.seed);

    let mut order: Vec<usize> = (0..j).collect();
    root.substream("synth.communities").shuffle(&mut order);
    let mut community = vec![0; j];
    for (pos, &r) in order.iter().enumerate() {
        community[r] = pos % k;
    }

    let mut rng = root.substream("synth.space");
    let centers: Vec<(f64, f64)> = (0..k)
        .map(|q| {
            if k == 1 {
                (0.0, 0.0)
            } else {
                let angle = std::f64::consts::TAU * q as f64 / k as f64;
                (CLUSTER_RADIUS * angle.cos(), CLUSTER_RADIUS * angle.sin())
            }
        })
        .collect();
    let coords: Vec<(f64, f64)> = community
        .iter()
        .map(|&q| {
            let (cx, cy) = centers[q];
            (cx + CLUSTER_SPREAD * rng.normal(), cy + CLUSTER_SPREAD * rng.normal())
        })
        .collect();
    let dist = Tensor::from_fn(j, j, |a, b| {
        if a == b {
            0.0
        } else {
            let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
            (dx * dx + dy * dy).sqrt()
        }
    });

    let mut rng = root.substream("synth.poi");
    let profiles: Vec<Vec<f64>> = (0..k)
        .map(|q| {
            let raw: Vec<f64> = (0..c).map(|cat| if cat % k == q { 1.0 } else { 0.1 }).collect();
            let total: f64 = raw.iter().sum();
            raw.iter()
                .map(|v| (1.0 - cfg.noise) * v / total + cfg.noise / c as f64)
                .collect()
        })
        .collect();
    let mut counts = Tensor::zeros(j, c);
    for r in 0..j {
        let n = 20 + rng.below(41);
        for _ in 0..n {
            let cat = rng.weighted_index(&profiles[community[r]]);
            counts.set(r, cat, counts.get(r, cat) + 1.0);
        }
    }
    let categories = (0..c).map(|q| format!("cat_{q}")).collect();

    let members: Vec<Vec<usize>> = (0..k).map(|q| (0..j).filter(|&r| community[r] == q).collect()).collect();
    let mut rng = root.substream("synth.trips");
    let mut trips = Vec::with_capacity(j * cfg.trips_per_region);
    for src in 0..j {
        let q = community[src];
        for _ in 0..cfg.trips_per_region {
            let dst = if rng.bernoulli(1.0 - cfg.noise) {
                members[q][rng.below(members[q].len())]
            } else {
                rng.below(j)
            };
            let src_slot = if rng.bernoulli(0.5) { q % t } else { rng.below(t) };
            let dst_slot = (src_slot + rng.below(2)).min(t - 1);
            trips.push(Trip { src_region: src, dst_region: dst, src_slot, dst_slot });
        }
    }
    // The slot count is recovered from the data on reload.
    if let Some(last) = trips.last_mut() {
        last.dst_slot = t - 1;
    }

    let mut rng = root.substream("synth.labels");
    let offsets: Vec<f64> = (0..k).map(|_| rng.uniform_in(2.0, 12.0)).collect();
    let targets = community
        .iter()
        .map(|&q| offsets[q] + 2.0 * cfg.noise * rng.normal())
        .collect();
    let mut rng = root.substream("synth.series");
    let series = community
        .iter()
        .map(|&q| {
            let rate = 0.3 * 1.8f64.powi(q as i32) * rng.uniform_in(0.7, 1.3);
            (0..cfg.series_len).map(|_| poisson(&mut rng, rate)).collect()
        })
        .collect();

    let mut regions = RegionSet::new(j)?;
    regions.centroids = Some(coords);
    let ds = Dataset {
        regions,
        poi: PoiMatrix::new(counts, categories)?,
        trajectories: TrajectorySet::new(trips, j, t)?,
        distances: DistanceMatrix::new(dist)?,
        labels: Some(LabelSeries { targets, series: Some(series) }),
        communities: Some(community),
    };
    ds.validate()?;
    Ok(ds)
}
