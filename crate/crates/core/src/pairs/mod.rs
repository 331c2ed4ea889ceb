//! Training-pair construction: filter generated candidates by quality,
//! score all pairs on quality gap and lexical similarity, pick one pair per
//! task (preferring pairs that pass tests), and emit oriented instances
//! with difference masks.

mod algorithm;
mod dataset;

pub use algorithm::{
    dedup_candidates, filter_candidates, orient_pair, score_pair, select_pair, Candidate,
    OrientedPair, PairOutcome, PairScore, PipelineConfig,
};
pub use dataset::{
    build_dataset, encode_dataset, read_dataset, write_dataset, DatasetInstance, DatasetStats,
};
