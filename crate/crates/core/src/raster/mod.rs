//! Image, mask and region value types.

mod io;
pub mod synth;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::CategoryId;

pub use io::{decode_mask_png, decode_png, encode_mask_png, encode_png, read_mask_png, read_png};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Contract(format!("image must be non-empty, got {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(mismatch("pixel buffer length", expected, pixels.len()));
        }
        Ok(Self { width, height, pixels })
    }

    /// An image filled with a single color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Iterates pixels in raster order.
    pub fn iter_rgb(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Per-pixel region labels forming a contiguous range `0..R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    count: u32,
}

impl RegionMask {
    /// Validates that `labels` covers the grid and uses every value in `0..R`.
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if labels.len() != expected {
            return Err(mismatch("mask label count", expected, labels.len()));
        }
        if expected == 0 {
            return Err(Error::Contract("mask must be non-empty".into()));
        }
        let count = labels.iter().copied().max().unwrap_or(0) + 1;
        let mut seen = vec![false; count as usize];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Contract(format!(
                "mask labels are not contiguous: label {missing} unused of 0..{count}"
            )));
        }
        Ok(Self { width, height, labels, count })
    }

    /// Renumbers arbitrary labels into `0..R` by first occurrence in raster order.
    pub fn canonicalize(width: u32, height: u32, raw: &[u32]) -> Result<Self> {
        let mut remap = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = remap.len() as u32;
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_count(&self) -> u32 {
        self.count
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// An arbitrary-shaped segment of a source image.
#[derive(Debug, Clone)]
pub struct Region {
    pub id: u32,
    pub bbox: BBox,
    pub area: u32,
    pub category: Option<CategoryId>,
    mask: Vec<bool>,
    source: Arc<RasterImage>,
}

impl Region {
    /// Builds a region from a bbox-local membership mask. The bbox must be
    /// tight and inside `source`.
    pub fn new(id: u32, bbox: BBox, mask: Vec<bool>, source: Arc<RasterImage>) -> Result<Self> {
        if bbox.x_max >= source.width()
            || bbox.y_max >= source.height()
            || bbox.x_min > bbox.x_max
            || bbox.y_min > bbox.y_max
        {
            return Err(Error::Contract(format!(
                "region {id} bbox {bbox:?} outside {}x{} image",
                source.width(),
                source.height()
            )));
        }
        let (w, h) = (bbox.width() as usize, bbox.height() as usize);
        if mask.len() != w * h {
            return Err(mismatch("region mask length", w * h, mask.len()));
        }
        let area = mask.iter().filter(|&&m| m).count() as u32;
        if area == 0 {
            return Err(Error::Contract(format!("region {id} has empty mask")));
        }
        let row_set = |y: usize| mask[y * w..(y + 1) * w].iter().any(|&m| m);
        let col_set = |x: usize| (0..h).any(|y| mask[y * w + x]);
        if !row_set(0) || !row_set(h - 1) || !col_set(0) || !col_set(w - 1) {
            return Err(Error::Contract(format!("region {id} bbox is not tight")));
        }
        Ok(Self { id, bbox, area, category: None, mask, source })
    }

    pub fn with_category(mut self, category: Option<CategoryId>) -> Self {
        self.category = category;
        self
    }

    pub fn source(&self) -> &Arc<RasterImage> {
        &self.source
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Membership at bbox-local coordinates.
    #[inline]
    pub fn mask_at(&self, lx: u32, ly: u32) -> bool {
        self.mask[ly as usize * self.bbox.width() as usize + lx as usize]
    }

    /// Membership at image coordinates.
    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.bbox.contains(x, y) && self.mask_at(x - self.bbox.x_min, y - self.bbox.y_min)
    }

    /// True when every pixel of the bbox belongs to the region.
    pub fn fills_bbox(&self) -> bool {
        self.area as u64 == self.bbox.area()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let w = self.bbox.width();
        let (mut sx, mut sy) = (0.0, 0.0);
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            sx += (self.bbox.x_min + i as u32 % w) as f64;
            sy += (self.bbox.y_min + i as u32 / w) as f64;
        }
        (sx / self.area as f64, sy / self.area as f64)
    }
}

/// Splits `image` into one [`Region`] per label of `mask`, ordered by label.
pub fn extract_regions(mask: &RegionMask, image: &Arc<RasterImage>) -> Result<Vec<Region>> {
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(mismatch(
            "mask vs image dimensions",
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    let r = mask.region_count() as usize;
    let mut boxes = vec![BBox { x_min: u32::MAX, y_min: u32::MAX, x_max: 0, y_max: 0 }; r];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let b = &mut boxes[mask.get(x, y) as usize];
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
    }
    boxes
        .into_iter()
        .enumerate()
        .map(|(label, bbox)| {
            let w = bbox.width();
            let mut bits = vec![false; bbox.area() as usize];
            for y in bbox.y_min..=bbox.y_max {
                for x in bbox.x_min..=bbox.x_max {
                    if mask.get(x, y) == label as u32 {
                        bits[((y - bbox.y_min) * w + (x - bbox.x_min)) as usize] = true;
                    }
                }
            }
            Region::new(label as u32, bbox, bits, Arc::clone(image))
        })
        .collect()
}

/// Keeps regions whose area is at least `min_area_fraction` of their source image.
pub fn filter_regions(regions: Vec<Region>, min_area_fraction: f64) -> Result<Vec<Region>> {
    if !(0.0..=1.0).contains(&min_area_fraction) {
        return Err(Error::Contract(format!("min_area_fraction must lie in [0, 1], got {min_area_fraction}")));
    }
    Ok(regions.into_iter().filter(|r| r.area as f64 >= min_area_fraction * r.source().area() as f64).collect())
}
