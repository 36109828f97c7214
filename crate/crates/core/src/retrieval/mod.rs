//! Out-of-sample encoding, packed binary code storage, Hamming ranking, and
//! the retrieval metrics: precision at K, average precision, and
//! precision-recall curves under the shared-label similarity rule.

mod codes;
mod metrics;

pub use codes::{
    encode_dataset, encode_query, encode_rows, hamming, rank, BinaryCodeSet,
};
pub use metrics::{
    average_precision, evaluate, pr_curve, precision_at_k, EvalReport, GroundTruth, QueryDiag,
};
