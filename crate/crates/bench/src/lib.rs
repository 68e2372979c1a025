//! Fixtures shared by the benchmarks.

use regionplsa::raster::synth::{generate_scene, Fill, Placement, Shape, SyntheticSceneSpec};
use regionplsa::{RasterImage, RegionMask};

/// A `side`-pixel scene with a noisy background and three shapes.
pub fn scene(side: u32, seed: u64) -> (RasterImage, RegionMask) {
    let noise = |base, amplitude| Fill::Noise { base, amplitude };
    let q = side / 4;
    let spec = SyntheticSceneSpec {
        width: side,
        height: side,
        background: noise([110, 170, 40], 12),
        background_category: Some(0),
        placements: vec![
            Placement {
                shape: Shape::Ellipse { cx: q, cy: q, rx: q - 2, ry: q / 2 },
                fill: noise([150, 150, 158], 8),
                category: Some(1),
            },
            Placement {
                shape: Shape::Diamond { cx: 3 * q, cy: 3 * q, rx: q - 2, ry: q - 2 },
                fill: noise([220, 60, 220], 10),
                category: Some(2),
            },
            Placement {
                shape: Shape::Rect { x: 0, y: 2 * q, w: q, h: q },
                fill: Fill::Solid { rgb: [22, 20, 18] },
                category: Some(3),
            },
        ],
        seed,
    };
    let s = generate_scene(&spec).expect("fixture scene is valid");
    (s.image, s.mask)
}

/// `n x m` term counts drawn from a fixed linear congruential stream.
pub fn term_rows(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut z = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    z = z.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((z >> 33) % 7) as f64
                })
                .collect::<Vec<f64>>()
        })
        .map(|mut row| {
            row[0] += 1.0;
            row
        })
        .collect()
}
