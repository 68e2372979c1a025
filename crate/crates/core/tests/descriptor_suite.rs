use regionplsa::color::rgb_to_hsv;
use regionplsa::descriptor::{
    classify_texture, describe, fuzzy_color_bin, mask_responses, ColorBin, DescriptorConfig, Shade, COLOR_BINS,
};
use regionplsa::{RasterImage, TextureCategory, FEATURE_LEN};

fn image(w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> RasterImage {
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            px.extend_from_slice(&f(x, y));
        }
    }
    RasterImage::new(w, h, px).unwrap()
}

fn flip_vertical(img: &RasterImage) -> RasterImage {
    image(img.width(), img.height(), |x, y| img.get(x, img.height() - 1 - y))
}

#[test]
fn uniform_white_patch_is_a_single_bin() {
    let f = describe(&RasterImage::filled(80, 80, [255, 255, 255]).unwrap(), &DescriptorConfig::default()).unwrap();
    assert!((f.values()[ColorBin::White.index()] - 1.0).abs() < 1e-12);
}

#[test]
fn crisp_uniform_patches_concentrate_in_one_bin() {
    let crisp = [
        ([255, 255, 255], ColorBin::White),
        ([128, 128, 128], ColorBin::Gray),
        ([0, 0, 0], ColorBin::Black),
        ([255, 0, 0], ColorBin::Hue { family: 0, shade: Shade::Light }),
        ([0, 128, 0], ColorBin::Hue { family: 3, shade: Shade::Plain }),
        ([0, 0, 70], ColorBin::Hue { family: 5, shade: Shade::Dark }),
        ([255, 255, 0], ColorBin::Hue { family: 2, shade: Shade::Light }),
    ];
    for (rgb, bin) in crisp {
        let f = describe(&RasterImage::filled(40, 24, rgb).unwrap(), &DescriptorConfig::default()).unwrap();
        let mass = f.get(TextureCategory::NonEdge, bin.index());
        assert!(mass >= 0.99, "{rgb:?}: {mass}");
    }
}

#[test]
fn vertical_stripes_land_in_the_vertical_row() {
    let stripes = |period: u32| {
        image(64, 64, move |x, _| if (x / (period / 2)).is_multiple_of(2) { [0, 0, 0] } else { [255, 255, 255] })
    };
    // half-block stripes under the default tiling
    let f = describe(&stripes(8), &DescriptorConfig::default()).unwrap();
    assert!(f.row_mass(TextureCategory::Vertical) >= 0.90);
    // two-pixel period needs two-pixel blocks
    let cfg = DescriptorConfig { block_size: 2, ..DescriptorConfig::default() };
    let f = describe(&stripes(2), &cfg).unwrap();
    assert!(f.row_mass(TextureCategory::Vertical) >= 0.90);
    // every block is half black, half white: the exact distribution
    let v = TextureCategory::Vertical.row() * COLOR_BINS;
    assert!((f.values()[v + ColorBin::Black.index()] - 0.5).abs() < 1e-12);
    assert!((f.values()[v + ColorBin::White.index()] - 0.5).abs() < 1e-12);
}

#[test]
fn period_two_stripes_average_out_under_large_blocks() {
    let img = image(64, 64, |x, _| if x % 2 == 0 { [0, 0, 0] } else { [255, 255, 255] });
    let f = describe(&img, &DescriptorConfig::default()).unwrap();
    assert!(f.row_mass(TextureCategory::NonEdge) > 0.99);
}

#[test]
fn mask_table_examples() {
    assert_eq!(classify_texture([[0.3, 0.3], [0.3, 0.3]]), TextureCategory::NonEdge);
    assert_eq!(classify_texture([[1.0, 0.0], [1.0, 0.0]]), TextureCategory::Vertical);
    assert_eq!(classify_texture([[1.0, 1.0], [0.0, 0.0]]), TextureCategory::Horizontal);
    assert_eq!(classify_texture([[1.0, 0.0], [0.0, 1.0]]), TextureCategory::NonDirectional);
    assert_eq!(classify_texture([[1.0, 0.5], [0.5, 0.0]]), TextureCategory::Diag45);
    assert_eq!(classify_texture([[0.5, 1.0], [0.0, 0.5]]), TextureCategory::Diag135);
    // [1 0; 0 1]: non-directional response 4 beats both diagonals
    let r = mask_responses([[1.0, 0.0], [0.0, 1.0]]);
    let of = |c| r.iter().find(|(t, _)| *t == c).unwrap().1;
    assert_eq!(of(TextureCategory::NonDirectional), 4.0);
    assert!((of(TextureCategory::Diag45)).abs() <= 2f64.sqrt() + 1e-12);
}

fn pseudo_random(seed: u64) -> impl Fn(u32, u32) -> [u8; 3] {
    move |x, y| {
        let mut z = seed ^ ((y as u64) << 20) ^ x as u64;
        z = z.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z ^= z >> 29;
        z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z ^= z >> 32;
        [z as u8, (z >> 8) as u8, (z >> 16) as u8]
    }
}

#[test]
fn vertical_flip_swaps_diagonals() {
    for seed in 0..20 {
        // coarse 4x4 cells keep plenty of edges of every direction
        let base = pseudo_random(seed);
        let img = image(48, 40, |x, y| base(x / 4, y / 4));
        let cfg = DescriptorConfig::default();
        let a = describe(&img, &cfg).unwrap();
        let b = describe(&flip_vertical(&img), &cfg).unwrap();
        let swap = |t: TextureCategory| match t {
            TextureCategory::Diag45 => TextureCategory::Diag135,
            TextureCategory::Diag135 => TextureCategory::Diag45,
            other => other,
        };
        for t in TextureCategory::ALL {
            for c in 0..COLOR_BINS {
                assert!((a.get(t, c) - b.get(swap(t), c)).abs() < 1e-12, "seed {seed} {t:?} bin {c}");
            }
        }
    }
}

#[test]
fn outputs_are_normalized() {
    for seed in 0..20 {
        let img = image(17 + seed as u32, 33, pseudo_random(seed));
        let f = describe(&img, &DescriptorConfig::default()).unwrap();
        assert_eq!(f.values().len(), FEATURE_LEN);
        assert!((f.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn memberships_sum_to_one_on_a_grid() {
    for r in (0..=255).step_by(15) {
        for g in (0..=255).step_by(15) {
            for b in (0..=255).step_by(15) {
                let m = fuzzy_color_bin(rgb_to_hsv([r as u8, g as u8, b as u8])).unwrap();
                assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(m.iter().all(|&v| v >= 0.0));
            }
        }
    }
}
