//! 144-bin color and edge-directivity descriptor.
//!
//! A patch is tiled into square blocks. Each block's four quadrant luminances
//! pick one of six texture rows; every pixel of the block then spreads one
//! unit of mass over the 24 fuzzy color bins of that row. The histogram is
//! L1-normalized and kept at full precision (no 3-bit quantizer).

use serde::{Deserialize, Serialize};

use crate::color::{rgb_to_hsv, Hsv};
use crate::error::{Error, Result};
use crate::padding::PaddedPatch;
use crate::raster::RasterImage;

pub const COLOR_BINS: usize = 24;
pub const TEXTURE_ROWS: usize = 6;
pub const FEATURE_LEN: usize = COLOR_BINS * TEXTURE_ROWS;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TextureCategory {
    NonEdge = 0,
    NonDirectional = 1,
    Vertical = 2,
    Horizontal = 3,
    Diag45 = 4,
    Diag135 = 5,
}

impl TextureCategory {
    pub const ALL: [TextureCategory; TEXTURE_ROWS] = [
        TextureCategory::NonEdge,
        TextureCategory::NonDirectional,
        TextureCategory::Vertical,
        TextureCategory::Horizontal,
        TextureCategory::Diag45,
        TextureCategory::Diag135,
    ];

    pub fn row(self) -> usize {
        self as usize
    }
}

/// The 24-color palette: three achromatic bins followed by seven hue
/// families, each as plain, light and dark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorBin {
    White,
    Gray,
    Black,
    Hue { family: usize, shade: Shade },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shade {
    Plain = 0,
    Light = 1,
    Dark = 2,
}

pub const HUE_NAMES: [&str; 7] = ["red", "orange", "yellow", "green", "cyan", "blue", "magenta"];
/// Hue-family centers in degrees; memberships are triangles between neighbors.
pub const HUE_CENTERS: [f64; 7] = [0.0, 30.0, 60.0, 120.0, 180.0, 240.0, 300.0];

impl ColorBin {
    pub fn index(self) -> usize {
        match self {
            ColorBin::White => 0,
            ColorBin::Gray => 1,
            ColorBin::Black => 2,
            ColorBin::Hue { family, shade } => 3 + 3 * family + shade as usize,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Some(match i {
            0 => ColorBin::White,
            1 => ColorBin::Gray,
            2 => ColorBin::Black,
            3..COLOR_BINS => {
                let shade = match (i - 3) % 3 {
                    0 => Shade::Plain,
                    1 => Shade::Light,
                    _ => Shade::Dark,
                };
                ColorBin::Hue { family: (i - 3) / 3, shade }
            }
            _ => return None,
        })
    }
}

/// Fuzzy membership of one HSV color over the 24 color bins.
pub fn fuzzy_color_bin(hsv: Hsv) -> Result<[f64; COLOR_BINS]> {
    let Hsv { h, s, v } = hsv;
    if !(0.0..360.0).contains(&h) || !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&v) {
        return Err(Error::Contract(format!("HSV out of range: h={h}, s={s}, v={v}")));
    }
    let mut out = [0.0; COLOR_BINS];
    if v < 0.15 {
        out[ColorBin::Black.index()] = 1.0;
        return Ok(out);
    }
    if s < 0.1 {
        let bin = if v > 0.9 { ColorBin::White } else { ColorBin::Gray };
        out[bin.index()] = 1.0;
        return Ok(out);
    }
    let shade = if v > 0.65 {
        Shade::Light
    } else if v < 0.35 {
        Shade::Dark
    } else {
        Shade::Plain
    };
    let n = HUE_CENTERS.len();
    let upper = HUE_CENTERS.iter().position(|&c| c > h).unwrap_or(n);
    let lo = upper - 1;
    let lo_center = HUE_CENTERS[lo];
    let hi_center = if upper == n { 360.0 } else { HUE_CENTERS[upper] };
    let t = (h - lo_center) / (hi_center - lo_center);
    out[ColorBin::Hue { family: lo, shade }.index()] += 1.0 - t;
    out[ColorBin::Hue { family: upper % n, shade }.index()] += t;
    Ok(out)
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// The five 2x2 edge masks in evaluation order: vertical, horizontal,
/// non-directional, 45 degrees, 135 degrees. Layout is `[tl, tr, bl, br]`.
const MASKS: [(TextureCategory, [f64; 4]); 5] = [
    (TextureCategory::Vertical, [1.0, -1.0, 1.0, -1.0]),
    (TextureCategory::Horizontal, [1.0, 1.0, -1.0, -1.0]),
    (TextureCategory::NonDirectional, [2.0, -2.0, -2.0, 2.0]),
    (TextureCategory::Diag45, [SQRT2, 0.0, 0.0, -SQRT2]),
    (TextureCategory::Diag135, [0.0, SQRT2, -SQRT2, 0.0]),
];

/// Absolute response of each directional mask, in [`MASKS`] order.
pub fn mask_responses(block: [[f64; 2]; 2]) -> [(TextureCategory, f64); 5] {
    let q = [block[0][0], block[0][1], block[1][0], block[1][1]];
    MASKS.map(|(cat, m)| (cat, (m[0] * q[0] + m[1] * q[1] + m[2] * q[2] + m[3] * q[3]).abs()))
}

/// Texture category of a 2x2 grid of mean luminances in `[0, 1]`.
pub fn classify_texture(block: [[f64; 2]; 2]) -> TextureCategory {
    classify_texture_with(block, DEFAULT_EDGE_THRESHOLD)
}

pub fn classify_texture_with(block: [[f64; 2]; 2], edge_threshold: f64) -> TextureCategory {
    let mut best = (TextureCategory::NonEdge, f64::NEG_INFINITY);
    for (cat, r) in mask_responses(block) {
        // strict comparison keeps the first mask on ties
        if r > best.1 {
            best = (cat, r);
        }
    }
    if best.1 < edge_threshold {
        TextureCategory::NonEdge
    } else {
        best.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    /// Block side in pixels; must be even. Trailing partial blocks are dropped.
    pub block_size: u32,
    pub edge_threshold: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self { block_size: 8, edge_threshold: DEFAULT_EDGE_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    L1,
}

/// A 144-entry descriptor, texture-major: index = 24 * texture_row + color_bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    norm: Normalization,
}

impl FeatureVector {
    /// Wraps raw values; they must be 144 finite non-negative numbers.
    pub fn new(values: Vec<f64>, norm: Normalization) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(crate::error::mismatch("feature length", FEATURE_LEN, values.len()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Contract("feature values must be finite and non-negative".into()));
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> Normalization {
        self.norm
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn get(&self, texture: TextureCategory, color: usize) -> f64 {
        self.values[texture.row() * COLOR_BINS + color]
    }

    /// Total mass of one texture row.
    pub fn row_mass(&self, texture: TextureCategory) -> f64 {
        let start = texture.row() * COLOR_BINS;
        self.values[start..start + COLOR_BINS].iter().sum()
    }
}

/// Describes a padded patch.
pub fn cedd(patch: &PaddedPatch, cfg: &DescriptorConfig) -> Result<FeatureVector> {
    describe(&patch.image, cfg)
}

/// Describes a whole image as if it were a patch.
pub fn describe(image: &RasterImage, cfg: &DescriptorConfig) -> Result<FeatureVector> {
    let bs = cfg.block_size;
    if bs < 2 || !bs.is_multiple_of(2) {
        return Err(Error::Contract(format!("block size must be even and >= 2, got {bs}")));
    }
    let (w, h) = (image.width(), image.height());
    let (nx, ny) = (w / bs, h / bs);
    if nx == 0 || ny == 0 {
        return Err(Error::DegeneratePatch { width: w, height: h, block: bs });
    }
    let half = bs / 2;
    let mut hist = vec![0.0; FEATURE_LEN];
    let mut block_hist = [0.0; COLOR_BINS];
    for by in 0..ny {
        for bx in 0..nx {
            let (x0, y0) = (bx * bs, by * bs);
            // integer channel sums per quadrant keep the luminance independent
            // of traversal order
            let mut sums = [[0u64; 3]; 4];
            block_hist.fill(0.0);
            for y in y0..y0 + bs {
                for x in x0..x0 + bs {
                    let p = image.get(x, y);
                    let q = (((y - y0) / half) * 2 + (x - x0) / half) as usize;
                    for c in 0..3 {
                        sums[q][c] += p[c] as u64;
                    }
                    let memberships = fuzzy_color_bin(rgb_to_hsv(p))?;
                    for (acc, m) in block_hist.iter_mut().zip(memberships) {
                        *acc += m;
                    }
                }
            }
            let n = (half * half) as f64 * 255.0;
            let lum = |s: [u64; 3]| (0.299 * s[0] as f64 + 0.587 * s[1] as f64 + 0.114 * s[2] as f64) / n;
            let grid = [[lum(sums[0]), lum(sums[1])], [lum(sums[2]), lum(sums[3])]];
            let row = classify_texture_with(grid, cfg.edge_threshold).row();
            for (acc, m) in hist[row * COLOR_BINS..(row + 1) * COLOR_BINS].iter_mut().zip(block_hist) {
                *acc += m;
            }
        }
    }
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegeneratePatch { width: w, height: h, block: bs });
    }
    hist.iter_mut().for_each(|v| *v /= total);
    FeatureVector::new(hist, Normalization::L1)
}
