//! Deterministic synthetic scenes with exact ground-truth masks.
//!
//! A scene is a background fill plus an ordered list of placements. Later
//! placements occlude earlier ones. Every placement that keeps at least one
//! visible pixel becomes one region; the visible background becomes one
//! region too, even when it is split into several pieces.

use serde::{Deserialize, Serialize};

use super::{RasterImage, RegionMask};
use crate::error::{Error, Result};
use crate::CategoryId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StripeOrientation {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Fill {
    Solid {
        rgb: [u8; 3],
    },
    /// Alternating bands of `a` and `b`, each `width` pixels wide.
    Stripes {
        a: [u8; 3],
        b: [u8; 3],
        width: u32,
        orientation: StripeOrientation,
    },
    /// `base` plus independent per-channel offsets in `[-amplitude, amplitude]`.
    Noise {
        base: [u8; 3],
        amplitude: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Rect {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
    },
    Ellipse {
        cx: u32,
        cy: u32,
        rx: u32,
        ry: u32,
    },
    /// Axis-aligned rhombus: `|dx|/rx + |dy|/ry <= 1`.
    Diamond {
        cx: u32,
        cy: u32,
        rx: u32,
        ry: u32,
    },
    /// A horizontal bar `bar` pixels thick crossing a vertical bar `post`
    /// pixels wide, both centered on the box.
    Cross {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        bar: u32,
        post: u32,
    },
}

impl Shape {
    fn bounds(&self) -> (i64, i64, i64, i64) {
        match *self {
            Shape::Rect { x, y, w, h } | Shape::Cross { x, y, w, h, .. } => {
                (x as i64, y as i64, x as i64 + w as i64 - 1, y as i64 + h as i64 - 1)
            }
            Shape::Ellipse { cx, cy, rx, ry } | Shape::Diamond { cx, cy, rx, ry } => {
                (cx as i64 - rx as i64, cy as i64 - ry as i64, cx as i64 + rx as i64, cy as i64 + ry as i64)
            }
        }
    }

    fn contains(&self, x: u32, y: u32) -> bool {
        match *self {
            Shape::Rect { x: x0, y: y0, w, h } => x >= x0 && x < x0 + w && y >= y0 && y < y0 + h,
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = x as f64 - cx as f64;
                let dy = y as f64 - cy as f64;
                let (rx, ry) = (rx.max(1) as f64, ry.max(1) as f64);
                dx * dx / (rx * rx) + dy * dy / (ry * ry) <= 1.0
            }
            Shape::Diamond { cx, cy, rx, ry } => {
                let dx = (x as f64 - cx as f64).abs();
                let dy = (y as f64 - cy as f64).abs();
                dx / rx.max(1) as f64 + dy / ry.max(1) as f64 <= 1.0
            }
            Shape::Cross { x: x0, y: y0, w, h, bar, post } => {
                if x < x0 || x >= x0 + w || y < y0 || y >= y0 + h {
                    return false;
                }
                let (dx, dy) = (x - x0, y - y0);
                let bar_top = (h - bar.min(h)) / 2;
                let post_left = (w - post.min(w)) / 2;
                (dy >= bar_top && dy < bar_top + bar) || (dx >= post_left && dx < post_left + post)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub shape: Shape,
    pub fill: Fill,
    #[serde(default)]
    pub category: Option<CategoryId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub width: u32,
    pub height: u32,
    pub background: Fill,
    #[serde(default)]
    pub background_category: Option<CategoryId>,
    #[serde(default)]
    pub placements: Vec<Placement>,
    pub seed: u64,
}

/// A rendered scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub image: RasterImage,
    pub mask: RegionMask,
    /// Category of each mask label.
    pub categories: Vec<Option<CategoryId>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Fill {
    fn color_at(&self, x: u32, y: u32, seed: u64, layer: u64) -> [u8; 3] {
        match *self {
            Fill::Solid { rgb } => rgb,
            Fill::Stripes { a, b, width, orientation } => {
                let coord = match orientation {
                    StripeOrientation::Vertical => x,
                    StripeOrientation::Horizontal => y,
                };
                if (coord / width.max(1)) % 2 == 0 {
                    a
                } else {
                    b
                }
            }
            Fill::Noise { base, amplitude } => {
                let key = seed ^ layer.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ ((y as u64) << 32 | x as u64);
                let mut h = splitmix64(key);
                let span = 2 * amplitude as i64 + 1;
                let mut out = base;
                for c in out.iter_mut() {
                    let off = (h % span as u64) as i64 - amplitude as i64;
                    h = splitmix64(h);
                    *c = (*c as i64 + off).clamp(0, 255) as u8;
                }
                out
            }
        }
    }
}

/// Renders `spec` into an image, its ground-truth mask and per-label categories.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<GeneratedScene> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(Error::Spec(format!("canvas must be non-empty, got {w}x{h}")));
    }
    for (i, p) in spec.placements.iter().enumerate() {
        let (x0, y0, x1, y1) = p.shape.bounds();
        if x0 < 0 || y0 < 0 || x1 >= w as i64 || y1 >= h as i64 || x1 < x0 || y1 < y0 {
            return Err(Error::Spec(format!("placement {i} ({:?}) does not fit the {w}x{h} canvas", p.shape)));
        }
    }

    // layer 0 is the background; placement i is layer i + 1
    let mut owner = vec![0usize; w as usize * h as usize];
    for (i, p) in spec.placements.iter().enumerate() {
        let (x0, y0, x1, y1) = p.shape.bounds();
        for y in y0 as u32..=y1 as u32 {
            for x in x0 as u32..=x1 as u32 {
                if p.shape.contains(x, y) {
                    owner[(y * w + x) as usize] = i + 1;
                }
            }
        }
    }

    let mut pixels = Vec::with_capacity(owner.len() * 3);
    for (idx, &layer) in owner.iter().enumerate() {
        let (x, y) = (idx as u32 % w, idx as u32 / w);
        let fill = if layer == 0 { &spec.background } else { &spec.placements[layer - 1].fill };
        pixels.extend_from_slice(&fill.color_at(x, y, spec.seed, layer as u64));
    }

    let layers = spec.placements.len() + 1;
    let mut visible = vec![false; layers];
    for &l in &owner {
        visible[l] = true;
    }
    let mut label_of = vec![u32::MAX; layers];
    let mut categories = Vec::new();
    for layer in (0..layers).filter(|&l| visible[l]) {
        label_of[layer] = categories.len() as u32;
        categories.push(if layer == 0 { spec.background_category } else { spec.placements[layer - 1].category });
    }
    let labels = owner.iter().map(|&l| label_of[l]).collect();

    Ok(GeneratedScene { image: RasterImage::new(w, h, pixels)?, mask: RegionMask::new(w, h, labels)?, categories })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: Fill = Fill::Solid { rgb: [255, 255, 255] };

    fn spec(placements: Vec<Placement>) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            width: 64,
            height: 64,
            background: WHITE,
            background_category: Some(0),
            placements,
            seed: 3,
        }
    }

    fn areas(scene: &GeneratedScene) -> Vec<usize> {
        let mut a = vec![0; scene.mask.region_count() as usize];
        for &l in scene.mask.labels() {
            a[l as usize] += 1;
        }
        a
    }

    #[test]
    fn cross_covers_bar_plus_post() {
        let cross = Shape::Cross { x: 4, y: 6, w: 40, h: 20, bar: 5, post: 8 };
        let mut n = 0;
        for y in 0..64 {
            for x in 0..64 {
                n += cross.contains(x, y) as usize;
            }
        }
        assert_eq!(n, 40 * 5 + 20 * 8 - 5 * 8);
        assert!(cross.contains(24, 6) && cross.contains(4, 13) && !cross.contains(4, 6));
    }

    #[test]
    fn empty_scene_is_background_only() {
        let scene = generate_scene(&spec(vec![])).unwrap();
        assert_eq!(scene.mask.region_count(), 1);
        assert_eq!(scene.categories, vec![Some(0)]);
    }

    #[test]
    fn centered_square() {
        let sq = Placement {
            shape: Shape::Rect { x: 22, y: 22, w: 20, h: 20 },
            fill: Fill::Solid { rgb: [255, 0, 0] },
            category: Some(1),
        };
        let scene = generate_scene(&spec(vec![sq])).unwrap();
        assert_eq!(areas(&scene), vec![3696, 400]);
        assert_eq!(scene.image.get(30, 30), [255, 0, 0]);
        assert_eq!(scene.image.get(0, 0), [255, 255, 255]);
    }

    #[test]
    fn out_of_canvas_placement_is_rejected() {
        let p = Placement { shape: Shape::Ellipse { cx: 60, cy: 30, rx: 10, ry: 4 }, fill: WHITE, category: None };
        assert!(matches!(generate_scene(&spec(vec![p])), Err(Error::Spec(_))));
    }

    #[test]
    fn fully_occluded_placement_disappears() {
        let small = Placement { shape: Shape::Rect { x: 10, y: 10, w: 4, h: 4 }, fill: WHITE, category: Some(1) };
        let big = Placement { shape: Shape::Rect { x: 0, y: 0, w: 64, h: 64 }, fill: WHITE, category: Some(2) };
        let scene = generate_scene(&spec(vec![small, big])).unwrap();
        assert_eq!(scene.mask.region_count(), 1);
        assert_eq!(scene.categories, vec![Some(2)]);
    }

    #[test]
    fn noise_is_seeded() {
        let mut s = spec(vec![]);
        s.background = Fill::Noise { base: [100, 100, 100], amplitude: 20 };
        let a = generate_scene(&s).unwrap();
        assert_eq!(a, generate_scene(&s).unwrap());
        s.seed += 1;
        assert_ne!(a.image, generate_scene(&s).unwrap().image);
        assert!(a.image.iter_rgb().all(|p| p.iter().all(|&c| (80..=120).contains(&c))));
    }
}
