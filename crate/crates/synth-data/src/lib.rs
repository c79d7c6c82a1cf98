//! Synthetic warped-document corpus generation.
//!
//! Every sample is built so its ground truth is exact by construction: a
//! flat page is rendered analytically, a smooth bijective forward field is
//! synthesized and numerically inverted, the page is warped through the
//! inverse, and the forward field itself is stored as the dewarping ground
//! truth. Dewarping the warped image with the stored mapping therefore
//! reproduces the flat page up to resampling error, which the tests bound.
//!
//! Domain axes (layout, lighting, capture angle, warp kind) form closed
//! vocabularies so corpora can be aggregated per combination.

mod corpus;
mod layout;
mod record;
mod warp;

pub use corpus::{
    generate_corpus, read_dataset, read_index, write_dataset, write_sample, CorpusParams,
    DatasetIndex, SCHEMA_VERSION,
};
pub use layout::{page_indicator, render_flat_document, DESK, PAGE_INSET_FRAC};
pub use record::{generate_pair, PairParams, SampleRecord};
pub use warp::{min_jacobian_det, sample_forward_field, WarpSpec};

use serde::{Deserialize, Serialize};

/// Errors produced while generating or persisting corpora.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A bijective field could not be produced even after amplitude backoff.
    #[error("field generation failed after {retries} retries: {reason}")]
    Generation { retries: usize, reason: String },
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("geometry error: {0}")]
    Mapping(#[from] mapping_core::MappingError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Page layout family of a rendered document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutCategory {
    SingleColumn,
    TwoColumn,
    Complex,
}

impl LayoutCategory {
    pub const ALL: [LayoutCategory; 3] = [
        LayoutCategory::SingleColumn,
        LayoutCategory::TwoColumn,
        LayoutCategory::Complex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutCategory::SingleColumn => "single-column",
            LayoutCategory::TwoColumn => "two-column",
            LayoutCategory::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

/// Environment lighting applied to the page texture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lighting {
    Bright,
    Dark,
    Warm,
}

impl Lighting {
    pub const ALL: [Lighting; 3] = [Lighting::Bright, Lighting::Dark, Lighting::Warm];

    pub fn as_str(self) -> &'static str {
        match self {
            Lighting::Bright => "bright",
            Lighting::Dark => "dark",
            Lighting::Warm => "warm",
        }
    }
}

/// Camera pose relative to the page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptureAngle {
    Frontal,
    Oblique,
}

impl CaptureAngle {
    pub const ALL: [CaptureAngle; 2] = [CaptureAngle::Frontal, CaptureAngle::Oblique];

    pub fn as_str(self) -> &'static str {
        match self {
            CaptureAngle::Frontal => "frontal",
            CaptureAngle::Oblique => "oblique",
        }
    }
}

/// Deformation family of the forward field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpKind {
    Curve,
    Fold,
    Crumple,
}

impl WarpKind {
    pub const ALL: [WarpKind; 3] = [WarpKind::Curve, WarpKind::Fold, WarpKind::Crumple];

    pub fn as_str(self) -> &'static str {
        match self {
            WarpKind::Curve => "curve",
            WarpKind::Fold => "fold",
            WarpKind::Crumple => "crumple",
        }
    }
}

/// Domain annotation carried by every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DomainTags {
    pub layout: LayoutCategory,
    pub lighting: Lighting,
    pub angle: CaptureAngle,
    pub warp_kind: WarpKind,
}

/// Derives an independent sub-seed from a master seed and a purpose tag,
/// so every random decision in the pipeline draws from its own stream.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}
