//! Region-based total scene annotation.
//!
//! The pipeline segments an image into regions ([`segmenter`]), realizes each
//! region as a rectangular patch under a padding strategy ([`padding`]),
//! describes the patch with a 144-bin color/edge-directivity histogram
//! ([`descriptor`]), and infers the region's latent topic with a pLSA model
//! fit by EM ([`plsa`]). [`annotator`] ties these together and renders
//! overlays; [`eval`] computes pre-test tables and precision/recall/F.

pub mod annotator;
pub mod color;
pub mod descriptor;
pub mod error;
pub mod eval;
mod font;
pub mod padding;
pub mod plsa;
pub mod raster;
pub mod segmenter;

pub use annotator::{
    annotate, annotate_with_mask, render_overlay, AnnotatorConfig, OverlayStyle, RankEntry, RegionAnnotation,
    SceneAnnotation,
};
pub use descriptor::{cedd, DescriptorConfig, FeatureVector, TextureCategory, FEATURE_LEN};
pub use error::{Error, Result};
pub use padding::{
    pad, pretest, select_strategy, train_padding_classifier, ClassifierConfig, Combination, ComboCounts,
    LabeledFeatures, PaddedPatch, PaddingClassifier, PaddingStrategy, StrategyMap,
};
pub use plsa::{fold_in, LabeledModel, PlsaConfig, PlsaModel, TermMatrix};
pub use raster::{extract_regions, filter_regions, BBox, RasterImage, Region, RegionMask};
pub use segmenter::{segment, ColorClassMap, SegmenterConfig};

/// Ground-truth category identifier (index into a sidecar name table).
pub type CategoryId = u32;
