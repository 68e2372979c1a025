//! Training, annotation and evaluation over in-memory datasets. The
//! command modules add file I/O around these.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use regionplsa::eval::{
    combination_confusion, compare_adaptive, majority_labels, prf, segmentation_agreement, AdaptiveComparison,
    ConfusionTable, PretestTable, PrfReport, RegionOutcome,
};
use regionplsa::padding::{pretest_features, region_feature, select_strategy};
use regionplsa::{
    annotate, extract_regions, filter_regions, train_padding_classifier, CategoryId, Combination, FeatureVector,
    LabeledFeatures, LabeledModel, PaddingStrategy, Region, SceneAnnotation,
};
use serde::{Deserialize, Serialize};

use crate::bundle::{ModelBundle, Provenance};
use crate::config::Config;
use crate::dataset::{Dataset, Item, Split};

/// Ground-truth regions of one split that pass the area filter, each
/// tagged with its category, plus the image they came from.
pub fn labeled_regions(ds: &Dataset, split: Split, min_area_fraction: f64) -> Result<Vec<(String, Region)>> {
    let mut out = Vec::new();
    for item in ds.split(split) {
        let mask =
            item.mask.as_ref().with_context(|| format!("{}: {split} image has no ground-truth mask", item.name))?;
        let regions = extract_regions(mask, &item.image).with_context(|| item.name.clone())?;
        let regions = regions
            .into_iter()
            .map(|r| {
                let c = item.regions[r.id as usize];
                r.with_category(Some(c))
            })
            .collect();
        for r in filter_regions(regions, min_area_fraction)? {
            out.push((item.name.clone(), r));
        }
    }
    Ok(out)
}

/// Describes each region under both paddings, naming the region on failure.
pub fn describe(regions: &[(String, Region)], cfg: &Config) -> Result<LabeledFeatures> {
    let rows = regions
        .par_iter()
        .map(|(name, r)| {
            let both =
                |s| region_feature(r, s, &cfg.descriptor).with_context(|| format!("{name} region {} ({s})", r.id));
            Ok((both(PaddingStrategy::PadOriginal)?, both(PaddingStrategy::PadZero)?, r.category.expect("labeled")))
        })
        .collect::<Result<Vec<(FeatureVector, FeatureVector, CategoryId)>>>()?;
    let mut out = LabeledFeatures::default();
    for (o, z, c) in rows {
        out.pad_o.push(o);
        out.pad_z.push(z);
        out.categories.push(c);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub topics: usize,
    pub train_regions: usize,
    pub pretest_regions: usize,
    pub loglik_o: f64,
    pub loglik_z: f64,
    pub pretest: PretestTable,
    pub comparison: AdaptiveComparison,
    pub classifier_training_accuracy: f64,
    pub classifier_degenerate: bool,
}

/// Trains pLSA-O and pLSA-Z on the train split, pre-tests both on the
/// pretest split, learns the padding classifier and keeps pLSA-O.
pub fn train(ds: &Dataset, cfg: &Config) -> Result<(ModelBundle, TrainReport)> {
    let train_regions = labeled_regions(ds, Split::Train, cfg.min_area_fraction)?;
    let pretest_regions = labeled_regions(ds, Split::Pretest, cfg.min_area_fraction)?;
    let mut used: Vec<CategoryId> = train_regions.iter().filter_map(|(_, r)| r.category).collect();
    used.sort_unstable();
    used.dedup();
    if used.len() < 2 {
        bail!("training needs at least 2 categories, the train split has {}", used.len());
    }
    if pretest_regions.is_empty() {
        bail!("the pretest split has no regions");
    }
    let k = cfg.topics.unwrap_or(ds.categories.len());
    let plsa = cfg.plsa();

    let train_f = describe(&train_regions, cfg)?;
    let pre_f = describe(&pretest_regions, cfg)?;
    let (model_o, model_z) = rayon::join(
        || LabeledModel::fit(&train_f.pad_o, &train_f.categories, k, &plsa),
        || LabeledModel::fit(&train_f.pad_z, &train_f.categories, k, &plsa),
    );
    let (model_o, model_z) = (model_o.context("training pLSA-O")?, model_z.context("training pLSA-Z")?);
    let (loglik_o, loglik_z) = (model_o.model.final_loglik(), model_z.model.final_loglik());
    let report = pretest_features(&train_f, &pre_f, model_o, model_z, &plsa)?;
    let map = report.strategy_map.clone();
    let classifier = train_padding_classifier(&train_f.pad_o, &train_f.categories, &map, &cfg.classifier())?;

    let mut outcomes = Vec::with_capacity(pre_f.len());
    for (i, &truth) in pre_f.categories.iter().enumerate() {
        let predicted = Combination::ALL.map(|c| report.table(c).rows[i].predicted);
        let chosen = select_strategy(&classifier, &pre_f.pad_o[i])?;
        outcomes.push(RegionOutcome { truth, predicted, chosen });
    }
    let comparison = compare_adaptive(&outcomes, &map);
    let summary = TrainReport {
        topics: k,
        train_regions: train_f.len(),
        pretest_regions: pre_f.len(),
        loglik_o,
        loglik_z,
        pretest: PretestTable::from_map(&map),
        comparison,
        classifier_training_accuracy: classifier.training_accuracy,
        classifier_degenerate: classifier.degenerate,
    };
    let bundle = ModelBundle {
        categories: ds.categories.clone(),
        config: cfg.clone(),
        model: report.model_o,
        strategy_map: map,
        classifier,
        pretest: outcomes,
        provenance: Provenance::new(cfg.seed, ds.content_hash(), train_f.len(), pre_f.len()),
    };
    Ok((bundle, summary))
}

pub fn annotate_image(
    image: &Arc<regionplsa::RasterImage>,
    bundle: &ModelBundle,
    cfg: &Config,
) -> Result<SceneAnnotation> {
    Ok(annotate(image, &bundle.model, &bundle.classifier, &cfg.annotator(&bundle.categories))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub image: String,
    pub scene: String,
    pub regions: usize,
    pub evaluated: usize,
    pub correct: usize,
    pub segmentation_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tau: f64,
    pub pretest: PretestTable,
    pub pretest_oo: ConfusionTable,
    pub pretest_oz: ConfusionTable,
    pub comparison: AdaptiveComparison,
    pub heldout: HeldoutComparison,
    pub prf: PrfReport,
    pub mean_segmentation_agreement: f64,
    pub images: Vec<ImageEvaluation>,
}

/// Top-1 correct counts over held-out ground-truth regions for the kept
/// pLSA-O model tested with each padding, with the classifier choosing per
/// region, and with the per-category best padding picked by an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutComparison {
    pub total: u64,
    pub pad_o: u64,
    pub pad_z: u64,
    pub adaptive: u64,
    pub ideal: u64,
}

impl HeldoutComparison {
    pub fn max_fixed(&self) -> u64 {
        self.pad_o.max(self.pad_z)
    }
}

pub fn heldout_comparison(bundle: &ModelBundle, ds: &Dataset, split: Split, cfg: &Config) -> Result<HeldoutComparison> {
    let regions = labeled_regions(ds, split, cfg.min_area_fraction)?;
    let f = describe(&regions, cfg)?;
    let plsa = cfg.plsa();
    let rows = (0..f.len())
        .into_par_iter()
        .map(|i| -> Result<(CategoryId, bool, bool, PaddingStrategy)> {
            let truth = f.categories[i];
            let (o, _) = bundle.model.predict(&f.pad_o[i], &plsa)?;
            let (z, _) = bundle.model.predict(&f.pad_z[i], &plsa)?;
            let chosen = select_strategy(&bundle.classifier, &f.pad_o[i])?;
            Ok((truth, o == truth, z == truth, chosen))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_cat = vec![(0u64, 0u64); ds.categories.len()];
    let mut out = HeldoutComparison { total: rows.len() as u64, pad_o: 0, pad_z: 0, adaptive: 0, ideal: 0 };
    for &(truth, o, z, chosen) in &rows {
        out.pad_o += o as u64;
        out.pad_z += z as u64;
        out.adaptive += match chosen {
            PaddingStrategy::PadOriginal => o,
            PaddingStrategy::PadZero => z,
        } as u64;
        let e = &mut per_cat[truth as usize];
        e.0 += o as u64;
        e.1 += z as u64;
    }
    out.ideal = per_cat.iter().map(|&(o, z)| o.max(z)).sum();
    Ok(out)
}

/// `(truth, tag)` for every predicted region above the area filter; the
/// truth is the majority ground-truth label under the region.
pub fn scored_regions(
    item: &Item,
    out: &SceneAnnotation,
    min_area_fraction: f64,
) -> Result<Vec<(CategoryId, Option<CategoryId>)>> {
    let truth = item.mask.as_ref().with_context(|| format!("{}: no ground truth", item.name))?;
    let majority = majority_labels(truth, &out.mask)?;
    let min_area = min_area_fraction * item.image.area() as f64;
    Ok(out
        .regions
        .iter()
        .filter(|a| a.area as f64 >= min_area)
        .map(|a| (item.regions[majority[a.region as usize] as usize], a.tag))
        .collect())
}

/// Annotates the test split and scores it; pre-test tables come from the bundle.
pub fn evaluate(bundle: &ModelBundle, ds: &Dataset, cfg: &Config) -> Result<EvaluationReport> {
    let tests: Vec<&Item> = ds.split(Split::Test).collect();
    if tests.is_empty() {
        bail!("the manifest has no test split");
    }
    if let Some(i) = tests.iter().find(|i| i.mask.is_none()) {
        bail!("{}: test image has no ground truth", i.name);
    }
    let per_image = tests
        .par_iter()
        .map(|item| {
            let out = annotate_image(&item.image, bundle, cfg).with_context(|| item.name.clone())?;
            let pairs = scored_regions(item, &out, cfg.min_area_fraction)?;
            let agreement = segmentation_agreement(item.mask.as_ref().expect("checked"), &out.mask)?;
            let eval = ImageEvaluation {
                image: item.name.clone(),
                scene: item.scene.clone(),
                regions: out.regions.len(),
                evaluated: pairs.len(),
                correct: pairs.iter().filter(|(t, p)| Some(*t) == *p).count(),
                segmentation_agreement: agreement,
            };
            Ok((pairs, eval))
        })
        .collect::<Result<Vec<_>>>()?;
    let c = ds.categories.len();
    let pairs: Vec<_> = per_image.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let images: Vec<ImageEvaluation> = per_image.into_iter().map(|(_, e)| e).collect();
    let mean_segmentation_agreement =
        images.iter().map(|e| e.segmentation_agreement).sum::<f64>() / images.len() as f64;
    Ok(EvaluationReport {
        tau: cfg.tau,
        pretest: PretestTable::from_map(&bundle.strategy_map),
        pretest_oo: combination_confusion(&bundle.pretest, Combination::OO, c)?,
        pretest_oz: combination_confusion(&bundle.pretest, Combination::OZ, c)?,
        comparison: compare_adaptive(&bundle.pretest, &bundle.strategy_map),
        heldout: heldout_comparison(bundle, ds, Split::Test, cfg)?,
        prf: prf(&pairs, c)?,
        mean_segmentation_agreement,
        images,
    })
}
