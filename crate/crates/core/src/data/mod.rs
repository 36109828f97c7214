//! Dataset representation, file ingestion, synthetic multi-label benchmark
//! generation, and query/database splits.

mod dataset;
mod split;
mod synth;

pub use dataset::{load, load_features, load_labels, Dataset};
pub use split::{split, Split};
pub use synth::{synthesize, SynthConfig};
