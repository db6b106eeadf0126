pub mod adversarial;
pub mod crossview;
pub mod diffmath;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod graph;
mod nn;
pub mod region;
pub mod trainer;
pub mod vgae;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tape.md")]
    mod tape {}
    #[doc = include_str!("../../../book/src/city-data.md")]
    mod city_data {}
    #[doc = include_str!("../../../book/src/fused-graph.md")]
    mod fused_graph {}
    #[doc = include_str!("../../../book/src/contrastive.md")]
    mod contrastive {}
    #[doc = include_str!("../../../book/src/adversarial.md")]
    mod adversarial {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
