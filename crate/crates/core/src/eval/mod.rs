//! Retrieval evaluation: leave-one-out search, classification metrics,
//! cross-validation of the full pipeline, XOR dissimilarity and PCA export.

mod crossval;
mod dissimilarity;
mod loo;
mod metrics;
mod pca;

pub use crossval::{cross_validate, CvOutcome, FoldRun, PipelineConfig};
pub use dissimilarity::{sample_per_class, write_bit_grids_csv, xor_bit_grid, xor_dissimilarity, DissimilarityMatrix};
pub use loo::{leave_one_out, leave_one_out_on, unimodal_baseline, ArchiveNeighbors, LooPredictions, NeighborSource, VectorNeighbors};
pub use metrics::{
    compute_metrics, mean_std, reports_from_predictions, summarize, write_reports_csv, write_summary_csv, AbstainPolicy,
    ClassCounts, Criterion, FoldSummary, MetricValues, Metrics, MetricsReport, Representation,
};
pub use pca::{pca_project, pca_to_dump, Pca, PCA_TAG};
