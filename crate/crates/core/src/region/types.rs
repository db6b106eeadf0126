use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Regions `0..count`, optionally with planar centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    count: usize,
    pub centroids: Option<Vec<(f64, f64)>>,
}

impl RegionSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Validation("a city needs at least one region".into()));
        }
        Ok(RegionSet {
            count,
            centroids: None,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Region-by-category POI counts.
#[derive(Clone, Debug, PartialEq)]
pub struct PoiMatrix {
    counts: Tensor,
    categories: Vec<String>,
}

impl PoiMatrix {
    pub fn new(counts: Tensor, categories: Vec<String>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Validation("POI matrix needs at least one category".into()));
        }
        if counts.cols() != categories.len() {
            return Err(Error::Validation(format!(
                "{} category names for {} columns",
                categories.len(),
                counts.cols()
            )));
        }
        if let Some(v) = counts.data().iter().find(|v| **v < 0.0) {
            return Err(Error::Validation(format!("negative POI count {v}")));
        }
        Ok(PoiMatrix { counts, categories })
    }

    pub fn counts(&self) -> &Tensor {
        &self.counts
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn regions(&self) -> usize {
        self.counts.rows()
    }

    pub fn num_categories(&self) -> usize {
        self.counts.cols()
    }
}

/// One origin/destination trip between time-stamped regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trip {
    pub src_region: usize,
    pub dst_region: usize,
    pub src_slot: usize,
    pub dst_slot: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    trips: Vec<Trip>,
    slots: usize,
}

impl TrajectorySet {
    pub fn new(trips: Vec<Trip>, regions: usize, slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(Error::Validation("at least one time slot is required".into()));
        }
        for (k, t) in trips.iter().enumerate() {
            if t.src_region >= regions || t.dst_region >= regions {
                return Err(Error::Validation(format!("trip {k}: region out of range 0..{regions}")));
            }
            if t.src_slot > t.dst_slot {
                return Err(Error::Validation(format!(
                    "trip {k}: destination slot {} precedes source slot {}",
                    t.dst_slot, t.src_slot
                )));
            }
            if t.dst_slot >= slots {
                return Err(Error::Validation(format!("trip {k}: slot {} out of range 0..{slots}", t.dst_slot)));
            }
        }
        Ok(TrajectorySet { trips, slots })
    }

    pub fn trips(&self) -> &[Trip] {
        &self.trips
    }

    pub fn slots(&self) -> usize {
        self.slots
    }
}

pub const SYMMETRY_TOL: f64 = 1e-9;

/// Symmetric pairwise region distances with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    dist: Tensor,
}

impl DistanceMatrix {
    pub fn new(dist: Tensor) -> Result<Self> {
        let n = dist.rows();
        if dist.cols() != n {
            return Err(Error::Validation(format!("distance matrix is {:?}", dist.shape())));
        }
        for i in 0..n {
            if dist.get(i, i) != 0.0 {
                return Err(Error::Validation(format!("distance ({i},{i}) is not zero")));
            }
            for j in 0..n {
                let d = dist.get(i, j);
                if d < 0.0 {
                    return Err(Error::Validation(format!("negative distance at ({i},{j})")));
                }
                if (d - dist.get(j, i)).abs() > SYMMETRY_TOL {
                    return Err(Error::Validation(format!("distance ({i},{j}) differs from ({j},{i})")));
                }
            }
        }
        Ok(DistanceMatrix { dist })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    pub fn len(&self) -> usize {
        self.dist.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.rows() == 0
    }

    pub fn matrix(&self) -> &Tensor {
        &self.dist
    }
}

/// Downstream regression targets, one per region.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSeries {
    pub targets: Vec<f64>,
    /// Optional per-region event counts over time, used for density strata.
    pub series: Option<Vec<Vec<f64>>>,
}

/// Everything one city contributes to training and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub regions: RegionSet,
    pub poi: PoiMatrix,
    pub trajectories: TrajectorySet,
    pub distances: DistanceMatrix,
    pub labels: Option<LabelSeries>,
    /// Planted community of each region, when known (synthetic cities).
    pub communities: Option<Vec<usize>>,
}

impl Dataset {
    pub fn num_regions(&self) -> usize {
        self.regions.count()
    }

    pub fn num_slots(&self) -> usize {
        self.trajectories.slots()
    }

    /// Cross-checks component sizes.
    pub fn validate(&self) -> Result<()> {
        let j = self.num_regions();
        if self.poi.regions() != j || self.distances.len() != j {
            return Err(Error::Validation(format!(
                "inconsistent region counts: regions {j}, poi {}, distances {}",
                self.poi.regions(),
                self.distances.len()
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.targets.len() != j {
                return Err(Error::Validation(format!("{} labels for {j} regions", labels.targets.len())));
            }
            if let Some(series) = &labels.series {
                if series.len() != j {
                    return Err(Error::Validation(format!("{} label series for {j} regions", series.len())));
                }
            }
        }
        if let Some(c) = &self.communities {
            if c.len() != j {
                return Err(Error::Validation(format!("{} community ids for {j} regions", c.len())));
            }
        }
        Ok(())
    }
}
