//! Evaluation suite for document dewarping.
//!
//! Pixel metrics (multi-scale structural similarity), geometry metrics
//! (local and aligned distortion over a dense flow field), text metrics
//! (edit distance / character error rate), OCR-service metrics through a
//! pluggable client, and per-domain report aggregation with JSON/CSV
//! emission. Every metric either produces a value or an explicit
//! unavailability error; nothing is ever substituted or fabricated.

mod distortion;
mod flow;
mod ocr;
mod report;
mod ssim;
mod text;

pub use distortion::{aligned_distortion, flow_distortions, local_distortion};
pub use flow::{DenseFlowBackend, FlowField, HornSchunckFlow};
pub use ocr::{mllm_ocr_metrics, HttpOcrClient, MockOcrClient, OcrClient, OCR_PROMPT};
pub use report::{
    aggregate_report, write_report_csv, write_report_json, AggregateRow, DomainKey, MetricMeans,
    MetricReport, PerSampleMetrics, ReportMeta, SampleEntry,
};
pub use ssim::ms_ssim;
pub use text::{char_error_rate, edit_distance};

/// Errors produced by the evaluation suite.
#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("size mismatch: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("dense flow failed: {0}")]
    FlowFailure(String),
    /// External OCR call failed after retries; the string records the cause.
    #[error("ocr unavailable: {0}")]
    OcrUnavailable(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MetricError>;
