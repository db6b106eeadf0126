//! View graphs, their fusion into one multi-view graph, and adjacency
//! normalization.

mod dump;
mod fused;
mod views;

pub use dump::{read_graph, write_graph, EDGES_FILE, NODES_FILE};
pub use fused::{
    fuse_views, normalize, normalize_on_tape, normalized_adjacency, MultiViewGraph, NormalizedAdjacency, View,
    ViewNode,
};
pub use views::{build_mobility_graph, build_poi_graph, build_spatial_graph, mobility_index, EdgeList};
