//! Measurement: confusion tables, precision/recall/F, pre-test tables and
//! the adaptive-vs-fixed padding comparison. CSV exports round for display;
//! the structs keep full precision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padding::{Combination, ComboCounts, PaddingStrategy, StrategyMap};
use crate::raster::RegionMask;
use crate::CategoryId;

/// Integer percent with halves rounded up.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn csv_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w).map_err(|e| Error::Contract(format!("csv export: {e}")))?;
    let bytes = w.into_inner().map_err(|e| Error::Contract(format!("csv export: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(format!("csv export: {e}")))
}

fn name_of(names: &[String], c: CategoryId) -> String {
    names.get(c as usize).cloned().unwrap_or_else(|| c.to_string())
}

/// Rows are truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    pub fn categories(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    /// Share of row `truth` predicted as `predicted`, in percent.
    pub fn row_percent(&self, truth: usize, predicted: usize) -> f64 {
        let t = self.row_total(truth);
        if t == 0 {
            0.0
        } else {
            100.0 * self.counts[truth][predicted] as f64 / t as f64
        }
    }

    /// Row-percentage matrix with a trailing `Total: correct/total` line.
    pub fn to_percent_csv(&self, names: &[String]) -> Result<String> {
        let c = self.categories();
        csv_string(|w| {
            let mut header = vec![String::from("truth")];
            header.extend((0..c).map(|j| name_of(names, j as CategoryId)));
            w.write_record(&header)?;
            for i in 0..c {
                let mut row = vec![name_of(names, i as CategoryId)];
                row.extend((0..c).map(|j| round_half_up(self.row_percent(i, j)).to_string()));
                w.write_record(&row)?;
            }
            let mut total = vec![format!("Total: {}/{}", self.correct(), self.total())];
            total.extend((0..c).map(|_| String::new()));
            w.write_record(&total)
        })
    }
}

/// Tallies `(truth, predicted)` pairs over `categories` ids.
pub fn confusion(pairs: &[(CategoryId, CategoryId)], categories: usize) -> Result<ConfusionTable> {
    let mut counts = vec![vec![0u64; categories]; categories];
    for &(t, p) in pairs {
        if t as usize >= categories || p as usize >= categories {
            return Err(Error::Contract(format!("pair ({t}, {p}) outside {categories} categories")));
        }
        counts[t as usize][p as usize] += 1;
    }
    Ok(ConfusionTable { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryPrf {
    pub category: CategoryId,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_category: Vec<CategoryPrf>,
    /// Categories that never occur as truth nor as prediction.
    pub excluded: Vec<CategoryId>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
}

impl PrfReport {
    pub fn get(&self, category: CategoryId) -> Option<&CategoryPrf> {
        self.per_category.iter().find(|r| r.category == category)
    }

    /// Columns: category, precision, recall, F; last row holds the macro means.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        csv_string(|w| {
            w.write_record(["category", "precision", "recall", "f"])?;
            for r in &self.per_category {
                w.write_record([
                    name_of(names, r.category),
                    format!("{:.2}", r.precision),
                    format!("{:.2}", r.recall),
                    format!("{:.2}", r.f),
                ])?;
            }
            w.write_record([
                "Mean".to_string(),
                format!("{:.2}", self.macro_precision),
                format!("{:.2}", self.macro_recall),
                format!("{:.2}", self.macro_f),
            ])
        })
    }
}

/// Unweighted means of the given `(precision, recall, f)` rows.
pub fn macro_means(rows: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = rows.len() as f64;
    let sum = rows.iter().fold((0.0, 0.0, 0.0), |a, r| (a.0 + r.0, a.1 + r.1, a.2 + r.2));
    (sum.0 / n, sum.1 / n, sum.2 / n)
}

/// Per-category precision, recall and F over `(truth, tag)` pairs. An
/// untagged region is a false negative for its truth category.
pub fn prf(pairs: &[(CategoryId, Option<CategoryId>)], categories: usize) -> Result<PrfReport> {
    let mut tp = vec![0u64; categories];
    let mut fp = vec![0u64; categories];
    let mut fn_ = vec![0u64; categories];
    for &(t, p) in pairs {
        if t as usize >= categories || p.is_some_and(|p| p as usize >= categories) {
            return Err(Error::Contract(format!("pair ({t}, {p:?}) outside {categories} categories")));
        }
        match p {
            Some(p) if p == t => tp[t as usize] += 1,
            Some(p) => {
                fp[p as usize] += 1;
                fn_[t as usize] += 1;
            }
            None => fn_[t as usize] += 1,
        }
    }
    let mut per_category = Vec::new();
    let mut excluded = Vec::new();
    for c in 0..categories {
        if tp[c] + fp[c] + fn_[c] == 0 {
            excluded.push(c as CategoryId);
            continue;
        }
        let ratio = |a: u64, b: u64| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        let precision = ratio(tp[c], fp[c]);
        let recall = ratio(tp[c], fn_[c]);
        per_category.push(CategoryPrf {
            category: c as CategoryId,
            tp: tp[c],
            fp: fp[c],
            fn_: fn_[c],
            precision,
            recall,
            f: f_measure(precision, recall),
        });
    }
    let rows: Vec<_> = per_category.iter().map(|r| (r.precision, r.recall, r.f)).collect();
    let (macro_precision, macro_recall, macro_f) = macro_means(&rows);
    Ok(PrfReport { per_category, excluded, macro_precision, macro_recall, macro_f })
}

/// Per-category pre-test counts with a totals row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretestTable {
    pub rows: Vec<(CategoryId, ComboCounts)>,
    pub total: ComboCounts,
    /// Best pad-O-trained combination per row.
    pub best: Vec<Combination>,
}

impl PretestTable {
    pub fn from_map(map: &StrategyMap) -> Self {
        let rows: Vec<_> = map.counts.iter().map(|(&c, &n)| (c, n)).collect();
        let best = rows.iter().map(|(_, n)| n.best_pad_o_trained()).collect();
        Self { rows, total: map.totals(), best }
    }

    /// Columns: category, train, test, O/O, Z/Z, O/Z, Z/O, best.
    pub fn to_csv(&self, names: &[String]) -> Result<String> {
        let line = |label: String, n: &ComboCounts, best: &str| {
            vec![
                label,
                n.train.to_string(),
                n.test.to_string(),
                n.oo.to_string(),
                n.zz.to_string(),
                n.oz.to_string(),
                n.zo.to_string(),
                best.to_string(),
            ]
        };
        csv_string(|w| {
            w.write_record(["category", "train", "test", "O/O", "Z/Z", "O/Z", "Z/O", "best"])?;
            for ((c, n), b) in self.rows.iter().zip(&self.best) {
                w.write_record(line(name_of(names, *c), n, b.label()))?;
            }
            w.write_record(line("TOTAL".into(), &self.total, ""))
        })
    }
}

/// A held-out region's top-1 prediction under each train/test combination,
/// plus the strategy the classifier picked for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOutcome {
    pub truth: CategoryId,
    /// Indexed like [`Combination::ALL`].
    pub predicted: [CategoryId; 4],
    pub chosen: PaddingStrategy,
}

impl RegionOutcome {
    pub fn correct(&self, c: Combination) -> bool {
        self.predicted[c as usize] == self.truth
    }

    /// The pad-O-trained combination that tests with `s`.
    pub fn combination_for(s: PaddingStrategy) -> Combination {
        match s {
            PaddingStrategy::PadOriginal => Combination::OO,
            PaddingStrategy::PadZero => Combination::OZ,
        }
    }

    pub fn adaptive_prediction(&self) -> CategoryId {
        self.predicted[Self::combination_for(self.chosen) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveComparison {
    pub total: u64,
    /// Per-category best of O/O and O/Z applied by an oracle.
    pub ideal: u64,
    /// Each category uses its strategy-map entry.
    pub mapped: u64,
    /// The classifier picks per region.
    pub adaptive: u64,
    /// Indexed like [`Combination::ALL`].
    pub fixed: [u64; 4],
    /// `adaptive / fixed - 1` for O/O and O/Z.
    pub improvement_over_oo: f64,
    pub improvement_over_oz: f64,
    /// Set when per-region choices beat the per-category oracle.
    pub adaptive_exceeds_ideal: bool,
}

impl AdaptiveComparison {
    pub fn max_fixed(&self) -> u64 {
        self.fixed.iter().copied().max().unwrap_or(0)
    }

    /// Best fixed count among the pad-O-trained combinations.
    pub fn max_fixed_pad_o_trained(&self) -> u64 {
        self.fixed[Combination::OO as usize].max(self.fixed[Combination::OZ as usize])
    }

    /// Columns: measure, correct, total.
    pub fn to_csv(&self) -> Result<String> {
        csv_string(|w| {
            w.write_record(["measure", "correct", "total"])?;
            let mut put = |k: &str, v: u64| w.write_record([k.to_string(), v.to_string(), self.total.to_string()]);
            put("ideal", self.ideal)?;
            put("mapped", self.mapped)?;
            put("adaptive", self.adaptive)?;
            for c in Combination::ALL {
                put(c.label(), self.fixed[c as usize])?;
            }
            Ok(())
        })
    }
}

fn improvement(adaptive: u64, base: u64) -> f64 {
    if base == 0 {
        f64::INFINITY
    } else {
        adaptive as f64 / base as f64 - 1.0
    }
}

/// Counts correct top-1 predictions under the oracle, the strategy map, the
/// classifier and every fixed combination.
pub fn compare_adaptive(outcomes: &[RegionOutcome], map: &StrategyMap) -> AdaptiveComparison {
    let mut by_cat: BTreeMap<CategoryId, (u64, u64)> = BTreeMap::new();
    let mut fixed = [0u64; 4];
    let mut adaptive = 0;
    let mut mapped = 0;
    for o in outcomes {
        let e = by_cat.entry(o.truth).or_default();
        e.0 += o.correct(Combination::OO) as u64;
        e.1 += o.correct(Combination::OZ) as u64;
        for c in Combination::ALL {
            fixed[c as usize] += o.correct(c) as u64;
        }
        adaptive += (o.adaptive_prediction() == o.truth) as u64;
        let s = map.get(o.truth).unwrap_or(PaddingStrategy::PadOriginal);
        mapped += o.correct(RegionOutcome::combination_for(s)) as u64;
    }
    // ties go to O/O, which changes nothing in the count
    let ideal = by_cat.values().map(|&(oo, oz)| oo.max(oz)).sum();
    AdaptiveComparison {
        total: outcomes.len() as u64,
        ideal,
        mapped,
        adaptive,
        fixed,
        improvement_over_oo: improvement(adaptive, fixed[Combination::OO as usize]),
        improvement_over_oz: improvement(adaptive, fixed[Combination::OZ as usize]),
        adaptive_exceeds_ideal: adaptive > ideal,
    }
}

/// Confusion table of the adaptive predictions.
pub fn adaptive_confusion(outcomes: &[RegionOutcome], categories: usize) -> Result<ConfusionTable> {
    let pairs: Vec<_> = outcomes.iter().map(|o| (o.truth, o.adaptive_prediction())).collect();
    confusion(&pairs, categories)
}

/// Confusion table when each category uses its oracle-best combination.
pub fn ideal_confusion(outcomes: &[RegionOutcome], categories: usize) -> Result<ConfusionTable> {
    let mut by_cat: BTreeMap<CategoryId, (u64, u64)> = BTreeMap::new();
    for o in outcomes {
        let e = by_cat.entry(o.truth).or_default();
        e.0 += o.correct(Combination::OO) as u64;
        e.1 += o.correct(Combination::OZ) as u64;
    }
    let pairs: Vec<_> = outcomes
        .iter()
        .map(|o| {
            let (oo, oz) = by_cat[&o.truth];
            let c = if oz > oo { Combination::OZ } else { Combination::OO };
            (o.truth, o.predicted[c as usize])
        })
        .collect();
    confusion(&pairs, categories)
}

/// Confusion table of a fixed combination.
pub fn combination_confusion(
    outcomes: &[RegionOutcome],
    combo: Combination,
    categories: usize,
) -> Result<ConfusionTable> {
    let pairs: Vec<_> = outcomes.iter().map(|o| (o.truth, o.predicted[combo as usize])).collect();
    confusion(&pairs, categories)
}

/// Symmetric pixel agreement between two partitions of the same image: the
/// mean of the truth-to-prediction and prediction-to-truth best-overlap
/// fractions. 1 means identical partitions up to relabeling.
pub fn segmentation_agreement(truth: &RegionMask, predicted: &RegionMask) -> Result<f64> {
    if truth.width() != predicted.width() || truth.height() != predicted.height() {
        return Err(crate::error::mismatch(
            "mask dimensions",
            format!("{}x{}", truth.width(), truth.height()),
            format!("{}x{}", predicted.width(), predicted.height()),
        ));
    }
    let (nt, np) = (truth.region_count() as usize, predicted.region_count() as usize);
    let mut overlap = vec![0u64; nt * np];
    for (&t, &p) in truth.labels().iter().zip(predicted.labels()) {
        overlap[t as usize * np + p as usize] += 1;
    }
    let forward: u64 = (0..nt).map(|t| (0..np).map(|p| overlap[t * np + p]).max().unwrap_or(0)).sum();
    let backward: u64 = (0..np).map(|p| (0..nt).map(|t| overlap[t * np + p]).max().unwrap_or(0)).sum();
    let n = truth.labels().len() as f64;
    Ok((forward + backward) as f64 / (2.0 * n))
}

/// Majority ground-truth label under each predicted region.
pub fn majority_labels(truth: &RegionMask, predicted: &RegionMask) -> Result<Vec<u32>> {
    if truth.width() != predicted.width() || truth.height() != predicted.height() {
        return Err(Error::Contract("mask dimensions differ".into()));
    }
    let (nt, np) = (truth.region_count() as usize, predicted.region_count() as usize);
    let mut overlap = vec![0u64; nt * np];
    for (&t, &p) in truth.labels().iter().zip(predicted.labels()) {
        overlap[p as usize * nt + t as usize] += 1;
    }
    Ok((0..np)
        .map(|p| {
            let row = &overlap[p * nt..(p + 1) * nt];
            // lowest label wins ties
            (0..nt).max_by(|&a, &b| row[a].cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0) as u32
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_goes_up_on_halves() {
        assert_eq!(round_half_up(12.5), 13);
        assert_eq!(round_half_up(12.4999), 12);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let pairs: Vec<_> = (0..3).flat_map(|c| [(c, c), (c, c)]).collect();
        let t = confusion(&pairs, 3).unwrap();
        assert_eq!(t.correct(), t.total());
        assert_eq!(t.row_percent(1, 1), 100.0);
        let r = prf(&pairs.iter().map(|&(t, p)| (t, Some(p))).collect::<Vec<_>>(), 3).unwrap();
        assert!(r.per_category.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f == 1.0));
    }

    #[test]
    fn untagged_counts_against_recall_only() {
        let r = prf(&[(0, Some(0)), (0, None)], 2).unwrap();
        let c0 = r.get(0).unwrap();
        assert_eq!((c0.tp, c0.fp, c0.fn_), (1, 0, 1));
        assert_eq!(c0.precision, 1.0);
        assert_eq!(c0.recall, 0.5);
        assert_eq!(r.excluded, vec![1]);
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        assert!(confusion(&[(0, 5)], 2).is_err());
        assert!(prf(&[(0, Some(5))], 2).is_err());
    }

    #[test]
    fn agreement_penalizes_both_directions() {
        let truth = RegionMask::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(segmentation_agreement(&truth, &truth).unwrap(), 1.0);
        let merged = RegionMask::new(4, 1, vec![0, 0, 0, 0]).unwrap();
        assert_eq!(segmentation_agreement(&truth, &merged).unwrap(), 0.75);
        let split = RegionMask::new(4, 1, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(segmentation_agreement(&truth, &split).unwrap(), 0.75);
        assert_eq!(majority_labels(&truth, &merged).unwrap(), vec![0]);
    }

    #[test]
    fn percent_csv_has_total_line() {
        let t = confusion(&[(0, 0), (0, 1), (1, 1)], 2).unwrap();
        let csv = t.to_percent_csv(&["a".into(), "b".into()]).unwrap();
        assert_eq!(csv, "truth,a,b\na,50,50\nb,0,100\nTotal: 2/3,,\n");
    }
}
