//! Visceral-to-subcutaneous fat ratio from CT volumes.
//!
//! The pipeline thresholds a HU volume into a fat mask, removes thin
//! artifacts with a binary opening, then sweeps rays around the body center
//! to integrate the subcutaneous fat band in polar form. Visceral fat is the
//! remainder of the total fat pixel count. Supporting modules cover NIfTI
//! I/O, synthetic phantoms with analytic ground truth, overlap and
//! classification metrics, the combined Crohn's/TB score, and timing.

pub mod bench;
pub mod error;
pub mod fatseg;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod preprocess;
pub mod raycast;
pub mod scoring;
pub mod volume;

pub use bench::{bench_volume, run_bench, BenchReport, StageStats};
pub use error::{Error, Result};
pub use fatseg::{
    classify_by_ratio, compute_subcut_area, fat_mask, fat_ratio_2d, fat_ratio_3d, measure_mask,
    segment_subcut, subcut_mask, total_fat_area, AngleUnit, BoundaryModel, CenterMode, FatMeasurement, Label,
    PipelineConfig, RayLength, SliceMeasurement, SweepConfig, SweepRecord, SweepTrace,
    RATIO_THRESHOLD,
};
pub use metrics::{
    batch_classify_eval, classification_metrics, overlap, relative_error, ClassificationMetrics,
    ConfusionCounts, OverlapReport, Summary,
};
pub use phantom::{generate_phantom, near_threshold_phantom, PhantomSpec, PhantomTruth};
pub use scoring::{
    aggregate_ptb, classify_ptb, compute_scores, DiagnosisResult, PtbSeries, ScoringParams,
};
pub use nifti::{load_mask, load_volume, save_mask, save_volume};
pub use preprocess::{open_mask, threshold_fat, MorphologyConfig, ThresholdConfig};
pub use raycast::{find_last_point, line_iter, LineIter, PixelPoint, RayHit};
pub use volume::{BinaryMask, HuVolume, MaskView, Shape, SliceSelector, Spacing};
