//! Template-driven synthetic corpora.
//!
//! A corpus spec lists scene templates. Each template draws a background
//! fill and a set of objects with randomized size, position and fill. Every
//! image gets its own RNG stream derived from `(seed, scene, split, index)`,
//! so adding images to one split never perturbs another.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionplsa::raster::synth::{generate_scene, Fill, Placement, Shape, StripeOrientation, SyntheticSceneSpec};
use regionplsa::CategoryId;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Item, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rect,
    Ellipse,
    Diamond,
    /// Bar and post spanning the box, a quarter of its height and a fifth of its width thick.
    Cross,
}

/// Inclusive integer range.
pub type Span = [u32; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub category: CategoryId,
    pub shape: ShapeKind,
    /// Bounding-box width and height.
    pub w: Span,
    pub h: Span,
    /// Left and top edge; uniform over the canvas when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Span>,
    pub fills: Vec<Fill>,
    /// Keep clear of earlier exclusive objects.
    #[serde(default = "yes")]
    pub exclusive: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub name: String,
    pub background: CategoryId,
    pub background_fills: Vec<Fill>,
    #[serde(default)]
    pub objects: Vec<ObjectTemplate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: u32,
    pub pretest: u32,
    pub test: u32,
}

impl SplitCounts {
    fn get(&self, s: Split) -> u32 {
        match s {
            Split::Train => self.train,
            Split::Pretest => self.pretest,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_side")]
    pub width: u32,
    #[serde(default = "default_side")]
    pub height: u32,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub scenes: Vec<SceneTemplate>,
    #[serde(default = "default_counts")]
    pub per_scene: SplitCounts,
}

fn default_side() -> u32 {
    96
}

fn default_counts() -> SplitCounts {
    SplitCounts { train: 10, pretest: 3, test: 12 }
}

/// Retries before an exclusive object accepts an overlapping position.
const PLACEMENT_TRIES: usize = 64;

fn pick(rng: &mut ChaCha8Rng, span: Span) -> u32 {
    let (lo, hi) = (span[0].min(span[1]), span[0].max(span[1]));
    rng.random_range(lo..=hi)
}

fn image_seed(seed: u64, scene: usize, split: Split, index: u32) -> u64 {
    let mut z = seed ^ 0x5eed_0f5c_e7e5;
    for v in [scene as u64, split as u64, index as u64] {
        z = (z ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z ^= z >> 31;
    }
    z
}

type Rect = (u32, u32, u32, u32);

fn overlaps(a: Rect, b: Rect, margin: u32) -> bool {
    a.0 < b.0 + b.2 + margin && b.0 < a.0 + a.2 + margin && a.1 < b.1 + b.3 + margin && b.1 < a.1 + a.3 + margin
}

fn shape_in(kind: ShapeKind, x: u32, y: u32, w: u32, h: u32) -> Shape {
    match kind {
        ShapeKind::Rect => Shape::Rect { x, y, w, h },
        ShapeKind::Cross => Shape::Cross { x, y, w, h, bar: (h / 4).max(1), post: (w / 5).max(1) },
        ShapeKind::Ellipse | ShapeKind::Diamond => {
            let (rx, ry) = ((w - 1) / 2, (h - 1) / 2);
            let (cx, cy) = (x + rx, y + ry);
            if kind == ShapeKind::Ellipse {
                Shape::Ellipse { cx, cy, rx, ry }
            } else {
                Shape::Diamond { cx, cy, rx, ry }
            }
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            bail!("canvas must be non-empty");
        }
        for s in &self.scenes {
            if s.background_fills.is_empty() {
                bail!("scene {}: no background fills", s.name);
            }
            for (i, o) in std::iter::once(s.background).chain(s.objects.iter().map(|o| o.category)).enumerate() {
                if o as usize >= self.categories.len() {
                    bail!("scene {}: layer {i} uses category {o} outside the name table", s.name);
                }
            }
            for o in &s.objects {
                if o.fills.is_empty() {
                    bail!("scene {}: object without fills", s.name);
                }
                if o.w[0].max(o.w[1]) > self.width
                    || o.h[0].max(o.h[1]) > self.height
                    || o.w[0].min(o.w[1]) == 0
                    || o.h[0].min(o.h[1]) == 0
                {
                    bail!("scene {}: object size range does not fit the canvas", s.name);
                }
            }
        }
        Ok(())
    }

    /// Draws the scene description of one image.
    pub fn draw(&self, scene: usize, split: Split, index: u32) -> SyntheticSceneSpec {
        let t = &self.scenes[scene];
        let seed = image_seed(self.seed, scene, split, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let background = t.background_fills[rng.random_range(0..t.background_fills.len())].clone();
        let mut placements = Vec::new();
        let mut taken: Vec<Rect> = Vec::new();
        for o in &t.objects {
            let w = pick(&mut rng, o.w).min(self.width);
            let h = pick(&mut rng, o.h).min(self.height);
            let place = |rng: &mut ChaCha8Rng| {
                let x = pick(rng, o.x.unwrap_or([0, self.width - w])).min(self.width - w);
                let y = pick(rng, o.y.unwrap_or([0, self.height - h])).min(self.height - h);
                (x, y, w, h)
            };
            let mut r = place(&mut rng);
            if o.exclusive {
                for _ in 0..PLACEMENT_TRIES {
                    if !taken.iter().any(|&t| overlaps(r, t, 2)) {
                        break;
                    }
                    r = place(&mut rng);
                }
                taken.push(r);
            }
            let fill = o.fills[rng.random_range(0..o.fills.len())].clone();
            placements.push(Placement {
                shape: shape_in(o.shape, r.0, r.1, r.2, r.3),
                fill,
                category: Some(o.category),
            });
        }
        SyntheticSceneSpec {
            width: self.width,
            height: self.height,
            background,
            background_category: Some(t.background),
            placements,
            seed,
        }
    }

    /// Renders every image of every scene and split.
    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut jobs = Vec::new();
        for (si, t) in self.scenes.iter().enumerate() {
            for split in Split::ALL {
                for i in 0..self.per_scene.get(split) {
                    jobs.push((si, t, split, i));
                }
            }
        }
        use rayon::prelude::*;
        let items = jobs
            .par_iter()
            .map(|&(si, t, split, i)| {
                let spec = self.draw(si, split, i);
                let g = generate_scene(&spec).with_context(|| format!("scene {} image {i}", t.name))?;
                let regions = g
                    .categories
                    .iter()
                    .map(|c| c.context("synthetic layer without category"))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Item {
                    name: format!("{}_{}_{:03}", t.name, split, i),
                    scene: t.name.clone(),
                    split,
                    image: Arc::new(g.image),
                    mask: Some(g.mask),
                    regions,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { categories: self.categories.clone(), items })
    }
}

fn noise(base: [u8; 3], amplitude: u8) -> Fill {
    Fill::Noise { base, amplitude }
}

fn fine_stripes(a: [u8; 3], b: [u8; 3], orientation: StripeOrientation) -> Fill {
    Fill::Stripes { a, b, width: 1, orientation }
}

/// Category names of the `table1` preset, in id order.
pub const TABLE1_CATEGORIES: [&str; 8] =
    ["butterfly", "leaves", "flower", "flight", "sky", "mountain", "plants", "cats"];

/// Five scenes over eight categories at roughly a tenth of the reference
/// corpus size: 10 train, 3 pretest and 12 test images per scene.
///
/// Objects are diamonds and ellipses, so their bounding boxes carry a good
/// share of surrounding scene. Under pad-O that context pulls small objects
/// toward the background category; under pad-Z the black fill pulls them
/// toward the dark `cats` category instead. Which effect wins depends on the
/// category, which is what the adaptive padding has to learn.
pub fn table1() -> CorpusSpec {
    use StripeOrientation::{Horizontal, Vertical};
    const BUTTERFLY: u32 = 0;
    const LEAVES: u32 = 1;
    const FLOWER: u32 = 2;
    const FLIGHT: u32 = 3;
    const SKY: u32 = 4;
    const MOUNTAIN: u32 = 5;
    const PLANTS: u32 = 6;
    const CATS: u32 = 7;
    let leaves = vec![noise([110, 170, 40], 12), noise([125, 180, 50], 10)];
    let sky = vec![noise([125, 175, 235], 8), noise([140, 190, 240], 6)];
    let plants = vec![noise([35, 85, 55], 10), noise([45, 95, 60], 8)];
    let object = |category, shape, w: Span, h: Span, fills: Vec<Fill>| ObjectTemplate {
        category,
        shape,
        w,
        h,
        x: None,
        y: None,
        fills,
        exclusive: true,
    };
    let gray = vec![noise([150, 150, 158], 8), fine_stripes([135, 135, 140], [170, 170, 178], Horizontal)];
    let scenes = vec![
        SceneTemplate {
            name: "butterfly".into(),
            background: LEAVES,
            background_fills: leaves.clone(),
            objects: vec![object(
                BUTTERFLY,
                ShapeKind::Diamond,
                [80, 92],
                [68, 80],
                vec![fine_stripes([245, 150, 20], [250, 200, 60], Vertical), noise([240, 140, 30], 12)],
            )],
        },
        SceneTemplate {
            name: "flight".into(),
            background: SKY,
            background_fills: sky.clone(),
            objects: vec![object(FLIGHT, ShapeKind::Cross, [62, 76], [46, 58], gray)],
        },
        SceneTemplate {
            name: "flower".into(),
            background: PLANTS,
            background_fills: plants,
            objects: vec![object(
                FLOWER,
                ShapeKind::Diamond,
                [37, 49],
                [37, 49],
                vec![noise([220, 60, 220], 12), noise([230, 90, 230], 10)],
            )],
        },
        SceneTemplate {
            name: "mountain".into(),
            background: MOUNTAIN,
            background_fills: vec![noise([160, 80, 75], 10), noise([150, 75, 70], 10)],
            objects: vec![ObjectTemplate {
                x: Some([0, 0]),
                y: Some([0, 0]),
                exclusive: false,
                ..object(SKY, ShapeKind::Rect, [96, 96], [28, 36], sky.clone())
            }],
        },
        SceneTemplate {
            name: "cats".into(),
            background: LEAVES,
            background_fills: leaves,
            objects: vec![object(
                CATS,
                ShapeKind::Ellipse,
                [45, 57],
                [29, 37],
                vec![noise([22, 20, 18], 6), noise([28, 22, 16], 6)],
            )],
        },
    ];
    CorpusSpec {
        seed: 2010,
        width: 96,
        height: 96,
        categories: TABLE1_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        scenes,
        per_scene: default_counts(),
    }
}
