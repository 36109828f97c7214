//! Statistical and structural analyses: the one-sided two-sample test used
//! to compare model variants, label-distribution and imbalance reports,
//! label correlation matrices over code centroids, and parameter counting.

mod correlation;
mod imbalance;
mod params;
mod stats;

pub use correlation::{label_correlation, LabelCorrelation};
pub use imbalance::{filter_dominant_label, imbalance_report, ImbalanceReport};
pub use params::{classifier_param_count, count_params, ParamCountReport};
pub use stats::{summarize, t_upper_tail, welch_p, SampleSummary, TTestResult};
