//! Padding strategies for arbitrary-shaped regions, the pre-test that picks a
//! strategy per category, and the linear classifier that predicts the
//! strategy from a region's descriptor.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{cedd, DescriptorConfig, FeatureVector, FEATURE_LEN};
use crate::error::{mismatch, Error, Result};
use crate::plsa::{FoldIn, LabeledModel, PlsaConfig};
use crate::raster::{RasterImage, Region};
use crate::CategoryId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PaddingStrategy {
    /// Pixels outside the region are black.
    PadZero,
    /// Pixels outside the region keep the source image content.
    PadOriginal,
}

impl PaddingStrategy {
    pub fn short(self) -> &'static str {
        match self {
            PaddingStrategy::PadZero => "Z",
            PaddingStrategy::PadOriginal => "O",
        }
    }
}

impl fmt::Display for PaddingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaddingStrategy::PadZero => "pad-Z",
            PaddingStrategy::PadOriginal => "pad-O",
        })
    }
}

/// A region realized as its bounding rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedPatch {
    pub image: RasterImage,
    pub strategy: PaddingStrategy,
    pub region_ref: u32,
}

impl PaddedPatch {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

pub fn pad(region: &Region, strategy: PaddingStrategy) -> Result<PaddedPatch> {
    let src = region.source();
    let b = region.bbox;
    if b.x_max >= src.width() || b.y_max >= src.height() {
        return Err(Error::Contract(format!(
            "region {} bbox {b:?} outside the {}x{} source",
            region.id,
            src.width(),
            src.height()
        )));
    }
    let (w, h) = (b.width(), b.height());
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    for ly in 0..h {
        for lx in 0..w {
            let keep = strategy == PaddingStrategy::PadOriginal || region.mask_at(lx, ly);
            let rgb = if keep { src.get(b.x_min + lx, b.y_min + ly) } else { [0, 0, 0] };
            pixels.extend_from_slice(&rgb);
        }
    }
    Ok(PaddedPatch { image: RasterImage::new(w, h, pixels)?, strategy, region_ref: region.id })
}

/// Pads then describes a region.
pub fn region_feature(region: &Region, strategy: PaddingStrategy, cfg: &DescriptorConfig) -> Result<FeatureVector> {
    cedd(&pad(region, strategy)?, cfg)
}

/// A train-side / test-side padding pair, in the column order O/O, Z/Z, O/Z, Z/O.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Combination {
    OO,
    ZZ,
    OZ,
    ZO,
}

impl Combination {
    pub const ALL: [Combination; 4] = [Combination::OO, Combination::ZZ, Combination::OZ, Combination::ZO];

    pub fn train(self) -> PaddingStrategy {
        match self {
            Combination::OO | Combination::OZ => PaddingStrategy::PadOriginal,
            Combination::ZZ | Combination::ZO => PaddingStrategy::PadZero,
        }
    }

    pub fn test(self) -> PaddingStrategy {
        match self {
            Combination::OO | Combination::ZO => PaddingStrategy::PadOriginal,
            Combination::ZZ | Combination::OZ => PaddingStrategy::PadZero,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Combination::OO => "O/O",
            Combination::ZZ => "Z/Z",
            Combination::OZ => "O/Z",
            Combination::ZO => "Z/O",
        }
    }
}

/// Per-category pre-test counts: sample sizes and correct classifications
/// under each combination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboCounts {
    pub train: u32,
    pub test: u32,
    pub oo: u32,
    pub zz: u32,
    pub oz: u32,
    pub zo: u32,
}

impl ComboCounts {
    pub fn get(&self, c: Combination) -> u32 {
        match c {
            Combination::OO => self.oo,
            Combination::ZZ => self.zz,
            Combination::OZ => self.oz,
            Combination::ZO => self.zo,
        }
    }

    fn bump(&mut self, c: Combination) {
        match c {
            Combination::OO => self.oo += 1,
            Combination::ZZ => self.zz += 1,
            Combination::OZ => self.oz += 1,
            Combination::ZO => self.zo += 1,
        }
    }

    /// Best combination among those trained on pad-O; O/O wins ties.
    pub fn best_pad_o_trained(&self) -> Combination {
        if self.oz > self.oo {
            Combination::OZ
        } else {
            Combination::OO
        }
    }
}

/// Each category's test-side padding, chosen from pre-test counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyMap {
    pub entries: BTreeMap<CategoryId, PaddingStrategy>,
    pub counts: BTreeMap<CategoryId, ComboCounts>,
    /// Held-out categories that never appear in training.
    pub unmappable: Vec<CategoryId>,
}

impl StrategyMap {
    /// Picks, per category, the test padding of the best pad-O-trained combination.
    pub fn from_counts(counts: BTreeMap<CategoryId, ComboCounts>) -> Self {
        let entries = counts.iter().map(|(&c, n)| (c, n.best_pad_o_trained().test())).collect();
        Self { entries, counts, unmappable: Vec::new() }
    }

    pub fn get(&self, category: CategoryId) -> Option<PaddingStrategy> {
        self.entries.get(&category).copied()
    }

    /// Sum of correct counts under each combination.
    pub fn totals(&self) -> ComboCounts {
        self.counts.values().fold(ComboCounts::default(), |mut acc, n| {
            acc.train += n.train;
            acc.test += n.test;
            acc.oo += n.oo;
            acc.zz += n.zz;
            acc.oz += n.oz;
            acc.zo += n.zo;
            acc
        })
    }

    /// Correct count when every category uses its mapped strategy.
    pub fn ideal_total(&self) -> u32 {
        self.counts.values().map(|n| n.get(n.best_pad_o_trained())).sum()
    }
}

/// Descriptors of labeled training regions under both paddings.
#[derive(Debug, Clone, Default)]
pub struct LabeledFeatures {
    pub pad_o: Vec<FeatureVector>,
    pub pad_z: Vec<FeatureVector>,
    pub categories: Vec<CategoryId>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Describes each region under both paddings. Regions without a category
    /// are skipped.
    pub fn extract(regions: &[Region], cfg: &DescriptorConfig) -> Result<Self> {
        let rows: Vec<_> = regions
            .par_iter()
            .filter(|r| r.category.is_some())
            .map(|r| {
                Ok((
                    region_feature(r, PaddingStrategy::PadOriginal, cfg)?,
                    region_feature(r, PaddingStrategy::PadZero, cfg)?,
                    r.category.expect("filtered"),
                ))
            })
            .collect::<Result<_>>()?;
        let mut out = Self::default();
        for (o, z, c) in rows {
            out.pad_o.push(o);
            out.pad_z.push(z);
            out.categories.push(c);
        }
        Ok(out)
    }

    pub fn get(&self, strategy: PaddingStrategy) -> &[FeatureVector] {
        match strategy {
            PaddingStrategy::PadOriginal => &self.pad_o,
            PaddingStrategy::PadZero => &self.pad_z,
        }
    }
}

/// One held-out region's probability ranking under one combination.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingRow {
    pub truth: CategoryId,
    pub predicted: CategoryId,
    pub fold: FoldIn,
}

impl RankingRow {
    pub fn correct(&self) -> bool {
        self.truth == self.predicted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingTable {
    pub combination: Combination,
    pub rows: Vec<RankingRow>,
}

#[derive(Debug, Clone)]
pub struct PretestConfig {
    pub descriptor: DescriptorConfig,
    pub plsa: PlsaConfig,
}

pub struct PretestReport {
    pub strategy_map: StrategyMap,
    /// Indexed like [`Combination::ALL`].
    pub tables: [RankingTable; 4],
    pub model_o: LabeledModel,
    pub model_z: LabeledModel,
}

impl PretestReport {
    pub fn table(&self, c: Combination) -> &RankingTable {
        &self.tables[c as usize]
    }
}

/// Trains pLSA-O and pLSA-Z on `train`, folds every held-out region into
/// both models under both paddings and counts top-1 hits per category.
pub fn pretest(train: &LabeledFeatures, heldout: &[Region], k: usize, cfg: &PretestConfig) -> Result<PretestReport> {
    if train.pad_o.len() != train.len() || train.pad_z.len() != train.len() {
        return Err(mismatch("labeled feature sets", train.len(), train.pad_o.len().min(train.pad_z.len())));
    }
    let model_o = LabeledModel::fit(&train.pad_o, &train.categories, k, &cfg.plsa)?;
    let model_z = LabeledModel::fit(&train.pad_z, &train.categories, k, &cfg.plsa)?;
    let heldout_features = LabeledFeatures::extract(heldout, &cfg.descriptor)?;
    pretest_features(train, &heldout_features, model_o, model_z, &cfg.plsa)
}

/// [`pretest`] with held-out descriptors and both trained models supplied.
pub fn pretest_features(
    train: &LabeledFeatures,
    heldout: &LabeledFeatures,
    model_o: LabeledModel,
    model_z: LabeledModel,
    plsa: &PlsaConfig,
) -> Result<PretestReport> {
    let mut counts: BTreeMap<CategoryId, ComboCounts> = BTreeMap::new();
    for &c in &train.categories {
        counts.entry(c).or_default().train += 1;
    }
    let mut unmappable: Vec<CategoryId> =
        heldout.categories.iter().copied().filter(|c| !counts.contains_key(c)).collect();
    unmappable.sort_unstable();
    unmappable.dedup();
    for c in &unmappable {
        warn!("held-out category {c} is absent from training and cannot be mapped");
    }

    let tables = Combination::ALL.map(|combo| -> Result<RankingTable> {
        let model = match combo.train() {
            PaddingStrategy::PadOriginal => &model_o,
            PaddingStrategy::PadZero => &model_z,
        };
        let rows = heldout
            .get(combo.test())
            .par_iter()
            .zip(&heldout.categories)
            .map(|(f, &truth)| {
                let (predicted, fold) = model.predict(f, plsa)?;
                Ok(RankingRow { truth, predicted, fold })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RankingTable { combination: combo, rows })
    });
    let [a, b, c, d] = tables;
    let tables = [a?, b?, c?, d?];

    for &truth in heldout.categories.iter().filter(|c| !unmappable.contains(c)) {
        counts.entry(truth).or_default().test += 1;
    }
    for table in &tables {
        for row in table.rows.iter().filter(|r| r.correct()) {
            if let Some(n) = counts.get_mut(&row.truth) {
                n.bump(table.combination);
            }
        }
    }
    let mut strategy_map = StrategyMap::from_counts(counts);
    strategy_map.unmappable = unmappable;
    Ok(PretestReport { strategy_map, tables, model_o, model_z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { reg: 1e-3, epochs: 200, seed: 0 }
    }
}

/// Linear max-margin predictor of the padding strategy. Inputs are
/// standardized with training statistics before the decision rule
/// `w.x + b > 0 => PadZero`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddingClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Training labels were all identical; the prediction is constant.
    pub degenerate: bool,
    pub training_accuracy: f64,
}

impl PaddingClassifier {
    /// A classifier that always answers `strategy`.
    pub fn constant(strategy: PaddingStrategy) -> Self {
        Self {
            weights: vec![0.0; FEATURE_LEN],
            bias: if strategy == PaddingStrategy::PadZero { 1.0 } else { -1.0 },
            mean: vec![0.0; FEATURE_LEN],
            std: vec![1.0; FEATURE_LEN],
            reg: 0.0,
            epochs: 0,
            seed: 0,
            degenerate: true,
            training_accuracy: 1.0,
        }
    }

    pub fn decision_value(&self, feature: &[f64]) -> Result<f64> {
        if feature.len() != self.weights.len() {
            return Err(mismatch("classifier input length", self.weights.len(), feature.len()));
        }
        Ok(self.standardized_dot(feature))
    }

    fn standardized_dot(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (((&v, w), m), sd) in x.iter().zip(&self.weights).zip(&self.mean).zip(&self.std) {
            s += w * (v - m) / sd;
        }
        s
    }
}

pub fn select_strategy(classifier: &PaddingClassifier, feature: &FeatureVector) -> Result<PaddingStrategy> {
    select_strategy_values(classifier, feature.values())
}

pub fn select_strategy_values(classifier: &PaddingClassifier, values: &[f64]) -> Result<PaddingStrategy> {
    Ok(if classifier.decision_value(values)? > 0.0 { PaddingStrategy::PadZero } else { PaddingStrategy::PadOriginal })
}

/// Trains the strategy classifier on pad-O descriptors, labeling each region
/// by its category's entry in `strategy_map` (PadZero = +1).
///
/// Optimizes the L2-regularized hinge loss with Pegasos-style stochastic
/// subgradient steps of size `1 / (reg * t)`; the bias rides along as a
/// constant input. Visiting order is reshuffled each epoch from `seed`.
pub fn train_padding_classifier(
    features: &[FeatureVector],
    categories: &[CategoryId],
    strategy_map: &StrategyMap,
    cfg: &ClassifierConfig,
) -> Result<PaddingClassifier> {
    if features.len() != categories.len() {
        return Err(mismatch("features vs categories", features.len(), categories.len()));
    }
    if features.is_empty() {
        return Err(Error::Contract("classifier needs at least one training region".into()));
    }
    if cfg.reg.is_nan() || cfg.reg <= 0.0 {
        return Err(Error::Contract(format!("regularization must be positive, got {}", cfg.reg)));
    }
    let labels: Vec<f64> = categories
        .iter()
        .map(|&c| match strategy_map.get(c) {
            Some(PaddingStrategy::PadZero) => Ok(1.0),
            Some(PaddingStrategy::PadOriginal) => Ok(-1.0),
            None => Err(Error::Contract(format!("category {c} has no strategy entry"))),
        })
        .collect::<Result<_>>()?;

    if labels.iter().all(|&y| y == labels[0]) {
        let strategy = if labels[0] > 0.0 { PaddingStrategy::PadZero } else { PaddingStrategy::PadOriginal };
        let mut clf = PaddingClassifier::constant(strategy);
        clf.reg = cfg.reg;
        clf.seed = cfg.seed;
        return Ok(clf);
    }

    let d = features[0].values().len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; d];
    for f in features {
        for ((s, v), m) in std.iter_mut().zip(f.values()).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in std.iter_mut() {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            let mut x: Vec<f64> = f.values().iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s).collect();
            x.push(1.0);
            x
        })
        .collect();

    let radius = 1.0 / cfg.reg.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.reg * t as f64);
            let margin = labels[i] * dot(&w, &xs[i]);
            let shrink = 1.0 - eta * cfg.reg;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += eta * labels[i] * xj;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
    }
    let bias = w.pop().expect("bias slot");
    let mut clf = PaddingClassifier {
        weights: w,
        bias,
        mean,
        std,
        reg: cfg.reg,
        epochs: cfg.epochs,
        seed: cfg.seed,
        degenerate: false,
        training_accuracy: 0.0,
    };
    let hits =
        features.iter().zip(&labels).filter(|(f, &y)| (clf.standardized_dot(f.values()) > 0.0) == (y > 0.0)).count();
    clf.training_accuracy = hits as f64 / features.len() as f64;
    Ok(clf)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::descriptor::Normalization;
    use crate::raster::BBox;

    fn white_region(mask: Vec<bool>, w: u32, h: u32) -> Region {
        let img = Arc::new(RasterImage::filled(w, h, [255, 255, 255]).unwrap());
        let bbox = BBox { x_min: 0, y_min: 0, x_max: w - 1, y_max: h - 1 };
        Region::new(0, bbox, mask, img).unwrap()
    }

    #[test]
    fn full_mask_paddings_agree() {
        let r = white_region(vec![true; 9], 3, 3);
        let z = pad(&r, PaddingStrategy::PadZero).unwrap();
        let o = pad(&r, PaddingStrategy::PadOriginal).unwrap();
        assert_eq!(z.image, o.image);
    }

    #[test]
    fn hole_in_the_middle() {
        let mut mask = vec![true; 9];
        mask[4] = false;
        let r = white_region(mask, 3, 3);
        let z = pad(&r, PaddingStrategy::PadZero).unwrap();
        let black: Vec<_> = z.image.iter_rgb().enumerate().filter(|(_, p)| *p == [0, 0, 0]).collect();
        assert_eq!(black.len(), 1);
        assert_eq!(black[0].0, 4);
        let o = pad(&r, PaddingStrategy::PadOriginal).unwrap();
        assert!(o.image.iter_rgb().all(|p| p == [255, 255, 255]));
    }

    fn counts(oo: u32, zz: u32, oz: u32, zo: u32) -> ComboCounts {
        ComboCounts { train: 0, test: 0, oo, zz, oz, zo }
    }

    #[test]
    fn strategy_prefers_o_o_on_ties() {
        let map = StrategyMap::from_counts(BTreeMap::from([(0, counts(9, 7, 12, 7)), (1, counts(16, 9, 16, 16))]));
        assert_eq!(map.get(0), Some(PaddingStrategy::PadZero));
        assert_eq!(map.get(1), Some(PaddingStrategy::PadOriginal));
        assert_eq!(map.ideal_total(), 12 + 16);
    }

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector::new(values, Normalization::L1).unwrap()
    }

    #[test]
    fn degenerate_labels_give_constant_classifier() {
        let map = StrategyMap::from_counts(BTreeMap::from([(0, counts(5, 0, 1, 0)), (1, counts(3, 0, 0, 0))]));
        let feats = vec![
            fv(vec![1.0 / 144.0; 144]),
            fv({
                let mut v = vec![0.0; 144];
                v[3] = 1.0;
                v
            }),
        ];
        let clf = train_padding_classifier(&feats, &[0, 1], &map, &ClassifierConfig::default()).unwrap();
        assert!(clf.degenerate);
        for f in &feats {
            assert_eq!(select_strategy(&clf, f).unwrap(), PaddingStrategy::PadOriginal);
        }
    }

    #[test]
    fn on_hyperplane_is_pad_original() {
        let mut clf = PaddingClassifier::constant(PaddingStrategy::PadZero);
        clf.bias = 0.0;
        let f = fv(vec![1.0 / 144.0; 144]);
        assert_eq!(select_strategy(&clf, &f).unwrap(), PaddingStrategy::PadOriginal);
        clf.bias = 1e-9;
        assert_eq!(select_strategy(&clf, &f).unwrap(), PaddingStrategy::PadZero);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let clf = PaddingClassifier::constant(PaddingStrategy::PadZero);
        assert!(select_strategy_values(&clf, &[0.0; 10]).is_err());
    }

    #[test]
    fn unmapped_category_is_rejected() {
        let map = StrategyMap::from_counts(BTreeMap::from([(0, counts(1, 0, 0, 0))]));
        let f = fv(vec![1.0 / 144.0; 144]);
        assert!(train_padding_classifier(&[f], &[9], &map, &ClassifierConfig::default()).is_err());
    }
}
