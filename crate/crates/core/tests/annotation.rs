use std::sync::Arc;

use regionplsa::annotator::{blend, tag_blobs};
use regionplsa::eval::majority_labels;
use regionplsa::padding::{region_feature, PaddingClassifier};
use regionplsa::raster::synth::{
    generate_scene, Fill, GeneratedScene, Placement, Shape, StripeOrientation, SyntheticSceneSpec,
};
use regionplsa::{
    annotate, extract_regions, render_overlay, AnnotatorConfig, DescriptorConfig, Error, LabeledModel, OverlayStyle,
    PaddingStrategy, PlsaConfig, RasterImage,
};

fn scene(seed: u64, x: u32, y: u32) -> GeneratedScene {
    generate_scene(&SyntheticSceneSpec {
        width: 80,
        height: 64,
        background: Fill::Noise { base: [60, 110, 200], amplitude: 12 },
        background_category: Some(0),
        placements: vec![Placement {
            shape: Shape::Rect { x, y, w: 32, h: 24 },
            fill: Fill::Stripes {
                a: [220, 40, 40],
                b: [250, 230, 60],
                width: 1,
                orientation: StripeOrientation::Vertical,
            },
            category: Some(1),
        }],
        seed,
    })
    .unwrap()
}

fn trained() -> LabeledModel {
    let mut feats = Vec::new();
    let mut cats = Vec::new();
    for s in 0..6 {
        let sc = scene(s, 8 + 4 * s as u32, 8 + 2 * s as u32);
        let img = Arc::new(sc.image.clone());
        for r in extract_regions(&sc.mask, &img).unwrap() {
            feats.push(region_feature(&r, PaddingStrategy::PadOriginal, &DescriptorConfig::default()).unwrap());
            cats.push(sc.categories[r.id as usize].unwrap());
        }
    }
    LabeledModel::fit(&feats, &cats, 2, &PlsaConfig::default()).unwrap()
}

#[test]
fn two_region_scene_is_tagged_correctly() {
    let model = trained();
    let clf = PaddingClassifier::constant(PaddingStrategy::PadOriginal);
    let test = scene(99, 40, 30);
    let cfg = AnnotatorConfig::default();
    let out = annotate(&Arc::new(test.image.clone()), &model, &clf, &cfg).unwrap();
    assert_eq!(out.regions.len(), out.mask.region_count() as usize);
    let truth = majority_labels(&test.mask, &out.mask).unwrap();
    for a in &out.regions {
        let want = test.categories[truth[a.region as usize] as usize];
        assert_eq!(a.tag, want, "region {}: {:?}", a.region, a.ranking);
    }
}

#[test]
fn threshold_only_moves_tags() {
    let model = trained();
    let clf = PaddingClassifier::constant(PaddingStrategy::PadOriginal);
    let img = Arc::new(scene(7, 20, 20).image);
    let run = |tau: f64| annotate(&img, &model, &clf, &AnnotatorConfig { tau, ..AnnotatorConfig::default() }).unwrap();
    let (none, all, mid) = (run(1.0 + 1e-9), run(0.0), run(0.3));
    assert!(none.regions.iter().all(|a| a.tag.is_none()));
    for ((a, b), c) in none.regions.iter().zip(&all.regions).zip(&mid.regions) {
        assert_eq!(a.ranking, b.ranking);
        assert_eq!(a.ranking, c.ranking);
        assert_eq!(a.strategy_used, b.strategy_used);
        if !b.ranking.is_empty() {
            assert_eq!(b.tag, Some(b.ranking[0].category));
        }
    }
}

#[test]
fn annotation_is_deterministic() {
    let model = trained();
    let clf = PaddingClassifier::constant(PaddingStrategy::PadZero);
    let img = Arc::new(scene(5, 30, 12).image);
    let cfg = AnnotatorConfig::default();
    let a = annotate(&img, &model, &clf, &cfg).unwrap();
    let b = annotate(&img, &model, &clf, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a
        .regions
        .iter()
        .filter(|r| r.diagnostic.is_none())
        .all(|r| r.strategy_used == Some(PaddingStrategy::PadZero)));
}

#[test]
fn tiny_image_is_degenerate_input() {
    let model = trained();
    let clf = PaddingClassifier::constant(PaddingStrategy::PadOriginal);
    let img = Arc::new(RasterImage::filled(4, 4, [0, 0, 0]).unwrap());
    assert!(matches!(annotate(&img, &model, &clf, &AnnotatorConfig::default()), Err(Error::DegenerateInput(_))));
}

#[test]
fn overlay_blends_every_tinted_pixel() {
    let model = trained();
    let clf = PaddingClassifier::constant(PaddingStrategy::PadOriginal);
    let sc = scene(3, 24, 16);
    let img = Arc::new(sc.image.clone());
    let sentinel = [1, 2, 3];
    let style = OverlayStyle { text: sentinel, ..OverlayStyle::default() };
    let cfg = AnnotatorConfig { tau: 0.0, overlay: style.clone(), ..AnnotatorConfig::default() };
    let out = annotate(&img, &model, &clf, &cfg).unwrap();
    let overlay = render_overlay(&img, &out.mask, &out.regions, &style).unwrap();
    assert_eq!(overlay, out.overlay);
    let tags: Vec<_> = out.regions.iter().map(|a| a.tag).collect();
    let blobs = tag_blobs(&out.mask, &tags);
    let (w, h) = (img.width(), img.height());
    let mut checked = 0;
    for y in 0..h {
        for x in 0..w {
            let b = blobs[out.mask.get(x, y) as usize];
            let edge = (x + 1 < w && blobs[out.mask.get(x + 1, y) as usize] != b)
                || (y + 1 < h && blobs[out.mask.get(x, y + 1) as usize] != b);
            let px = overlay.get(x, y);
            if edge {
                assert_eq!(px, style.outline);
            } else if px != sentinel {
                let tag = tags[out.mask.get(x, y) as usize].unwrap();
                assert_eq!(px, blend(img.get(x, y), style.tint(tag), 0.4), "({x},{y})");
                checked += 1;
            }
        }
    }
    assert!(checked > (w * h) as usize / 2);
}
