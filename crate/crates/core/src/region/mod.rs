//! City inputs: POI counts, trajectories, distances, labels, and the
//! initial region features derived from them.

mod embed;
mod io;
mod skipgram;
mod synth;
mod types;

pub use embed::{poi_context, region_poi_embed, self_attention_init, tfidf, PoiEmbedder, SelfAttention};
pub use io::{load_dataset, write_dataset, DatasetPaths};
pub use skipgram::{skipgram_train, SkipGramConfig};
pub use synth::{synth_city, SynthConfig};
pub use types::{Dataset, DistanceMatrix, LabelSeries, PoiMatrix, RegionSet, TrajectorySet, Trip};
