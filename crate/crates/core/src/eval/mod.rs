//! Corpus metrics and graph-property analyses.

pub mod analysis;
pub mod metrics;

pub use analysis::{attention_distance, binned_report, BinKey, BinnedReport, HeadDistance};
pub use metrics::{bleu, chrf_pp, score, sentence_chrf_pp, Metric};
