use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use super::views::{mobility_index, ordered, EdgeList};
use crate::diffmath::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    Poi,
    Mobility,
    Spatial,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            View::Poi => "poi",
            View::Mobility => "mobility",
            View::Spatial => "spatial",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "poi" => Ok(View::Poi),
            "mobility" => Ok(View::Mobility),
            "spatial" => Ok(View::Spatial),
            other => Err(format!("unknown view `{other}`")),
        }
    }
}

/// A region as seen by one view; mobility nodes also carry a time slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ViewNode {
    pub region: usize,
    pub view: View,
    pub slot: Option<usize>,
}

/// Fused graph over all views.
///
/// Node order is the POI block (`0..J`), then the mobility block in
/// region-major order (`J + j*T + t`), then the spatial block.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewGraph {
    regions: usize,
    slots: usize,
    nodes: Vec<ViewNode>,
    adjacency: Tensor,
}

fn check_edges(name: &str, edges: &EdgeList, n: usize) -> Result<()> {
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(Error::Config(format!("{name} edge ({a}, {b}) invalid for {n} nodes")));
        }
    }
    Ok(())
}

/// Merges the three view graphs and adds the per-region alignment edges
/// (POI-spatial, POI-mobility and spatial-mobility for every slot).
pub fn fuse_views(gp: &EdgeList, gm: &EdgeList, gs: &EdgeList, regions: usize, slots: usize) -> Result<MultiViewGraph> {
    if regions == 0 || slots == 0 {
        return Err(Error::Config(format!("cannot fuse {regions} regions over {slots} slots")));
    }
    check_edges("POI", gp, regions)?;
    check_edges("mobility", gm, regions * slots)?;
    check_edges("spatial", gs, regions)?;

    let mut g = MultiViewGraph::empty(regions, slots);
    let (mob, spa) = (regions, regions + regions * slots);
    for &(a, b) in gp {
        g.connect(a, b);
    }
    for &(a, b) in gm {
        g.connect(mob + a, mob + b);
    }
    for &(a, b) in gs {
        g.connect(spa + a, spa + b);
    }
    for j in 0..regions {
        g.connect(j, spa + j);
        for t in 0..slots {
            let m = mob + mobility_index(j, t, slots);
            g.connect(j, m);
            g.connect(spa + j, m);
        }
    }
    Ok(g)
}

impl MultiViewGraph {
    fn empty(regions: usize, slots: usize) -> Self {
        let mut nodes = Vec::with_capacity(regions * (slots + 2));
        nodes.extend((0..regions).map(|region| ViewNode { region, view: View::Poi, slot: None }));
        for region in 0..regions {
            nodes.extend((0..slots).map(|t| ViewNode { region, view: View::Mobility, slot: Some(t) }));
        }
        nodes.extend((0..regions).map(|region| ViewNode { region, view: View::Spatial, slot: None }));
        let n = nodes.len();
        MultiViewGraph { regions, slots, nodes, adjacency: Tensor::zeros(n, n) }
    }

    fn connect(&mut self, a: usize, b: usize) {
        self.adjacency.set(a, b, 1.0);
        self.adjacency.set(b, a, 1.0);
    }

    /// Rebuilds a graph from its node list and edges, checking that the node
    /// list follows the canonical block layout.
    pub fn from_parts(nodes: Vec<ViewNode>, edges: &[(usize, usize)]) -> Result<Self> {
        let regions = nodes.iter().filter(|n| n.view == View::Poi).count();
        if regions == 0 || !(nodes.len() - 2 * regions).is_multiple_of(regions) {
            return Err(Error::Validation(format!("{} nodes do not form a fused graph", nodes.len())));
        }
        let slots = (nodes.len() - 2 * regions) / regions;
        let mut g = MultiViewGraph::empty(regions, slots);
        if g.nodes != nodes {
            return Err(Error::Validation("node list is not in canonical block order".into()));
        }
        for &(a, b) in edges {
            if a >= g.len() || b >= g.len() || a == b {
                return Err(Error::Validation(format!("edge ({a}, {b}) invalid for {} nodes", g.len())));
            }
            g.connect(a, b);
        }
        Ok(g)
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ViewNode] {
        &self.nodes
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn poi_range(&self) -> Range<usize> {
        0..self.regions
    }

    pub fn mobility_range(&self) -> Range<usize> {
        self.regions..self.regions * (1 + self.slots)
    }

    pub fn spatial_range(&self) -> Range<usize> {
        self.regions * (1 + self.slots)..self.len()
    }

    pub fn index_of(&self, view: View, region: usize, slot: usize) -> usize {
        match view {
            View::Poi => region,
            View::Mobility => self.regions + mobility_index(region, slot, self.slots),
            View::Spatial => self.regions * (1 + self.slots) + region,
        }
    }

    /// Upper-triangle edges in row-major order.
    pub fn edges(&self) -> EdgeList {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency.get(i, j) != 0.0 {
                    out.push(ordered(i, j));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.data().iter().filter(|&&v| v != 0.0).count() / 2
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(Tensor);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Tensor {
        &self.0
    }

    pub fn into_matrix(self) -> Tensor {
        self.0
    }
}

pub fn normalized_adjacency(g: &MultiViewGraph) -> NormalizedAdjacency {
    normalize(g.adjacency())
}

/// Symmetric normalization of any square non-negative matrix.
pub fn normalize(a: &Tensor) -> NormalizedAdjacency {
    let n = a.rows();
    let scale: Vec<f64> = (0..n)
        .map(|i| (a.row(i).iter().sum::<f64>() + 1.0).powf(-0.5))
        .collect();
    NormalizedAdjacency(Tensor::from_fn(n, n, |i, j| {
        let v = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        scale[i] * v * scale[j]
    }))
}

/// Differentiable version of [`normalize`], used when the adjacency itself
/// is being optimized.
pub fn normalize_on_tape(tape: &mut Tape, a: Var) -> Result<Var> {
    let n = tape.value(a).rows();
    let eye = tape.constant(Tensor::eye(n));
    let with_loops = tape.add(a, eye)?;
    let deg = tape.row_sum(with_loops);
    let scale = tape.powf(deg, -0.5)?;
    let scale_row = tape.transpose(scale);
    let rows = tape.mul_col(with_loops, scale)?;
    tape.mul_row(rows, scale_row)
}
