//! Whole-scene annotation: segment, pick a padding per region, describe,
//! fold in, tag, and render an overlay.

use std::sync::Arc;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::DescriptorConfig;
use crate::error::{Error, Result};
use crate::font;
use crate::padding::{region_feature, select_strategy, PaddingClassifier, PaddingStrategy};
use crate::plsa::LabeledModel;
use crate::raster::{extract_regions, BBox, RasterImage, Region, RegionMask};
use crate::segmenter::{segment, SegmenterConfig};
use crate::CategoryId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayStyle {
    /// Weight of the tint color in the blend.
    pub alpha: f64,
    pub outline: [u8; 3],
    pub text: [u8; 3],
    /// Tint per category id, cycled when shorter than the category count.
    pub palette: Vec<[u8; 3]>,
    /// Display name per category id; ids without a name print as numbers.
    pub names: Vec<String>,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            outline: [0, 0, 0],
            text: [255, 255, 255],
            palette: vec![
                [230, 25, 75],
                [60, 180, 75],
                [255, 225, 25],
                [0, 130, 200],
                [245, 130, 48],
                [145, 30, 180],
                [70, 240, 240],
                [240, 50, 230],
                [210, 245, 60],
                [250, 190, 212],
                [0, 128, 128],
                [170, 110, 40],
            ],
            names: Vec::new(),
        }
    }
}

impl OverlayStyle {
    pub fn tint(&self, tag: CategoryId) -> [u8; 3] {
        if self.palette.is_empty() {
            return [255, 0, 0];
        }
        self.palette[tag as usize % self.palette.len()]
    }

    pub fn label(&self, tag: CategoryId) -> String {
        match self.names.get(tag as usize) {
            Some(n) if !n.is_empty() => n.to_ascii_uppercase(),
            _ => tag.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub segmenter: SegmenterConfig,
    pub min_area_fraction: f64,
    /// Minimum top posterior for a region to receive a tag.
    pub tau: f64,
    pub descriptor: DescriptorConfig,
    pub fold_in_iters: usize,
    pub fold_in_tol: f64,
    pub overlay: OverlayStyle,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            segmenter: SegmenterConfig::default(),
            min_area_fraction: 0.01,
            tau: 0.3,
            descriptor: DescriptorConfig::default(),
            fold_in_iters: 500,
            fold_in_tol: 1e-10,
            overlay: OverlayStyle::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub topic: usize,
    pub category: CategoryId,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAnnotation {
    pub region: u32,
    pub bbox: BBox,
    pub area: u32,
    /// Topics by descending posterior; empty when the region was not described.
    pub ranking: Vec<RankEntry>,
    pub tag: Option<CategoryId>,
    /// Absent when the region was not described.
    pub strategy_used: Option<PaddingStrategy>,
    pub diagnostic: Option<String>,
}

impl RegionAnnotation {
    fn untagged(region: &Region, diagnostic: String) -> Self {
        Self {
            region: region.id,
            bbox: region.bbox,
            area: region.area,
            ranking: Vec::new(),
            tag: None,
            strategy_used: None,
            diagnostic: Some(diagnostic),
        }
    }

    pub fn top(&self) -> Option<&RankEntry> {
        self.ranking.first()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub mask: RegionMask,
    /// One entry per mask label, ordered by label.
    pub regions: Vec<RegionAnnotation>,
    pub overlay: RasterImage,
}

/// Annotates one region: pad-O descriptor, strategy choice, descriptor under
/// that strategy, fold-in, threshold.
pub fn annotate_region(
    region: &Region,
    model: &LabeledModel,
    classifier: &PaddingClassifier,
    cfg: &AnnotatorConfig,
) -> RegionAnnotation {
    match try_annotate_region(region, model, classifier, cfg) {
        Ok(a) => a,
        Err(e) => {
            debug!("region {} left untagged: {e}", region.id);
            RegionAnnotation::untagged(region, e.to_string())
        }
    }
}

fn try_annotate_region(
    region: &Region,
    model: &LabeledModel,
    classifier: &PaddingClassifier,
    cfg: &AnnotatorConfig,
) -> Result<RegionAnnotation> {
    let probe = region_feature(region, PaddingStrategy::PadOriginal, &cfg.descriptor)?;
    let strategy = select_strategy(classifier, &probe)?;
    let feature = if strategy == PaddingStrategy::PadOriginal {
        probe
    } else {
        region_feature(region, strategy, &cfg.descriptor)?
    };
    let fold = crate::plsa::fold_in(&model.model, &feature, cfg.fold_in_iters, cfg.fold_in_tol)?;
    let ranking: Vec<RankEntry> = fold
        .ranking
        .iter()
        .map(|&(topic, probability)| RankEntry { topic, category: model.topic_category[topic], probability })
        .collect();
    let tag = ranking.first().filter(|t| t.probability >= cfg.tau).map(|t| t.category);
    Ok(RegionAnnotation {
        region: region.id,
        bbox: region.bbox,
        area: region.area,
        ranking,
        tag,
        strategy_used: Some(strategy),
        diagnostic: None,
    })
}

/// Segments and annotates `image`. Regions under the area filter stay
/// untagged with a diagnostic, so every mask label has an annotation.
pub fn annotate(
    image: &Arc<RasterImage>,
    model: &LabeledModel,
    classifier: &PaddingClassifier,
    cfg: &AnnotatorConfig,
) -> Result<SceneAnnotation> {
    let min_side = cfg.segmenter.window_sizes.iter().copied().min().unwrap_or(1);
    if image.width() < min_side || image.height() < min_side {
        return Err(Error::DegenerateInput(format!(
            "{}x{} image is smaller than the {min_side}px segmentation window",
            image.width(),
            image.height()
        )));
    }
    if !(0.0..=1.0).contains(&cfg.min_area_fraction) {
        return Err(Error::Contract(format!("min_area_fraction must lie in [0, 1], got {}", cfg.min_area_fraction)));
    }
    let mask = segment(image, &cfg.segmenter)?;
    annotate_with_mask(image, mask, model, classifier, cfg)
}

/// [`annotate`] on a precomputed mask.
pub fn annotate_with_mask(
    image: &Arc<RasterImage>,
    mask: RegionMask,
    model: &LabeledModel,
    classifier: &PaddingClassifier,
    cfg: &AnnotatorConfig,
) -> Result<SceneAnnotation> {
    let regions = extract_regions(&mask, image)?;
    let min_area = cfg.min_area_fraction * image.area() as f64;
    let annotations: Vec<RegionAnnotation> = regions
        .par_iter()
        .map(|r| {
            if (r.area as f64) < min_area {
                RegionAnnotation::untagged(r, format!("area {} below the {:.0} px filter", r.area, min_area))
            } else {
                annotate_region(r, model, classifier, cfg)
            }
        })
        .collect();
    let overlay = render_overlay(image, &mask, &annotations, &cfg.overlay)?;
    Ok(SceneAnnotation { mask, regions: annotations, overlay })
}

/// `(1 - alpha) * base + alpha * tint`, rounded per channel.
pub fn blend(base: [u8; 3], tint: [u8; 3], alpha: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = (1.0 - alpha) * base[c] as f64 + alpha * tint[c] as f64;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Blob id per region: 4-adjacent regions with the same tag share one blob.
pub fn tag_blobs(mask: &RegionMask, tags: &[Option<CategoryId>]) -> Vec<usize> {
    let (w, h) = (mask.width(), mask.height());
    let mut parent: Vec<usize> = (0..tags.len()).collect();
    let join = |a: u32, b: u32, parent: &mut Vec<usize>| {
        let (a, b) = (a as usize, b as usize);
        if a != b && tags[a].is_some() && tags[a] == tags[b] {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = mask.get(x, y);
            if x + 1 < w {
                join(l, mask.get(x + 1, y), &mut parent);
            }
            if y + 1 < h {
                join(l, mask.get(x, y + 1), &mut parent);
            }
        }
    }
    (0..tags.len()).map(|i| find(&mut parent, i)).collect()
}

/// Tints tagged regions, outlines blob boundaries and prints each tag at its
/// region's centroid.
pub fn render_overlay(
    image: &RasterImage,
    mask: &RegionMask,
    annotations: &[RegionAnnotation],
    style: &OverlayStyle,
) -> Result<RasterImage> {
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(crate::error::mismatch(
            "mask vs image dimensions",
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    let n = mask.region_count() as usize;
    if annotations.len() != n {
        return Err(crate::error::mismatch("annotation count", n, annotations.len()));
    }
    let mut tags = vec![None; n];
    for a in annotations {
        let slot = tags
            .get_mut(a.region as usize)
            .ok_or_else(|| Error::Contract(format!("annotation for unknown region {}", a.region)))?;
        *slot = a.tag;
    }
    let blobs = tag_blobs(mask, &tags);
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let l = mask.get(x, y) as usize;
            let b = blobs[l];
            let edge = (x + 1 < w && blobs[mask.get(x + 1, y) as usize] != b)
                || (y + 1 < h && blobs[mask.get(x, y + 1) as usize] != b);
            if edge {
                out.put(x, y, style.outline);
            } else if let Some(t) = tags[l] {
                out.put(x, y, blend(image.get(x, y), style.tint(t), style.alpha));
            }
        }
    }
    let regions = extract_regions(mask, &Arc::new(image.clone()))?;
    for r in &regions {
        if let Some(t) = tags[r.id as usize] {
            draw_text(&mut out, &style.label(t), r.centroid(), style.text);
        }
    }
    Ok(out)
}

fn draw_text(img: &mut RasterImage, text: &str, center: (f64, f64), color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let tw = font::text_width(text) as i64;
    let th = font::GLYPH_H as i64;
    let x0 = (center.0.round() as i64 - tw / 2).clamp(0, (w - tw).max(0));
    let y0 = (center.1.round() as i64 - th / 2).clamp(0, (h - th).max(0));
    font::for_each_pixel(text, |dx, dy| {
        let (x, y) = (x0 + dx as i64, y0 + dy as i64);
        if x < w && y < h {
            img.put(x as u32, y as u32, color);
        }
    });
}
