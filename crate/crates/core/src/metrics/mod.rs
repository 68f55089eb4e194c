//! Alignment and error metrics.

mod eval;
mod procrustes;

pub use eval::{evaluate, mpjpe, mpvpe, pa_mpjpe, pa_mpvpe, EvalReport, LevelBreakdown, MetricSet, PoseRecord, LEVELS};
pub use procrustes::{procrustes_align, SimilarityTransform};
