//! Probabilistic latent semantic analysis over region descriptors.
//!
//! Regions play the role of documents and descriptor bins the role of words.
//! The joint model is
//!
//! ```text
//! P(r_i, f_j) = P(r_i) * sum_k P(z_k | r_i) P(f_j | z_k)
//! ```
//!
//! and EM alternates the posterior `P(z_k | r_i, f_j)` (E-step) with the
//! re-estimation of `P(f_j | z_k)` and `P(z_k | r_i)` (M-step). The E-step
//! posterior is never materialized: each `(i, j)` cell is distributed over
//! topics and accumulated straight into the M-step numerators.

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::FeatureVector;
use crate::error::{mismatch, Error, Result};
use crate::CategoryId;

/// Floor applied to denominators and log arguments.
pub const FLOOR: f64 = 1e-12;

/// Non-negative weights `n(r_i, f_j)`, one row per region.
#[derive(Debug, Clone, PartialEq)]
pub struct TermMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    row_mass: Vec<f64>,
}

impl TermMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::Contract("term matrix must have at least one row and column".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        let mut row_mass = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(mismatch("term matrix row length", cols, row.len()));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Contract(format!("row {i} has a negative or non-finite weight")));
            }
            let mass: f64 = row.iter().sum();
            if mass <= 0.0 {
                return Err(Error::DegenerateRegion { region: i as u32, reason: "zero total mass".into() });
            }
            data.extend_from_slice(row);
            row_mass.push(mass);
        }
        Ok(Self { rows: rows.len(), cols, data, row_mass })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        self.row_mass[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.row_mass.iter().sum()
    }
}

/// `n(r_i, f_j) = scale * feature_i[j]`, kept real-valued.
pub fn build_term_matrix(features: &[FeatureVector], scale: f64) -> Result<TermMatrix> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::Contract(format!("scale must be positive, got {scale}")));
    }
    for (i, f) in features.iter().enumerate() {
        if f.mass() <= 0.0 {
            return Err(Error::DegenerateRegion { region: i as u32, reason: "feature has zero mass".into() });
        }
    }
    TermMatrix::new(features.iter().map(|f| f.values().iter().map(|v| v * scale).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlsaConfig {
    pub max_iters: usize,
    /// Relative tolerance on the log-likelihood change.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Multiplier applied to L1-normalized descriptors when building counts.
    pub scale: f64,
    /// Folding-in iteration cap and tolerance (L1 change of the posterior).
    pub fold_in_iters: usize,
    pub fold_in_tol: f64,
}

impl Default for PlsaConfig {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-6, restarts: 3, seed: 0, scale: 100.0, fold_in_iters: 500, fold_in_tol: 1e-10 }
    }
}

/// Fitted pLSA parameters. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsaModel {
    pub topics: usize,
    pub features: usize,
    /// `K x M`: `P(f_j | z_k)`.
    pub p_f_given_z: Vec<f64>,
    /// `N x K`: `P(z_k | r_i)` for the training regions.
    pub p_z_given_r: Vec<f64>,
    /// `P(r_i)`.
    pub p_r: Vec<f64>,
    /// Log-likelihood after every EM iteration of the retained run.
    pub loglik_trace: Vec<f64>,
    pub seed: u64,
    pub iterations: usize,
    pub tol: f64,
    pub restarts: usize,
    pub warnings: Vec<String>,
}

impl PlsaModel {
    pub fn regions(&self) -> usize {
        self.p_r.len()
    }

    pub fn topic_row(&self, k: usize) -> &[f64] {
        &self.p_f_given_z[k * self.features..(k + 1) * self.features]
    }

    pub fn region_posterior(&self, i: usize) -> &[f64] {
        &self.p_z_given_r[i * self.topics..(i + 1) * self.topics]
    }

    pub fn final_loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn dirichlet_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let draws: Vec<f64> = (0..cols).map(|_| Exp1.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        out.extend(draws.into_iter().map(|d: f64| d / sum));
    }
    out
}

/// Seeded symmetric Dirichlet(1) initialization: `(P(z|r), P(f|z))`.
pub fn random_init(n: usize, m: usize, k: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pzr = dirichlet_rows(&mut rng, n, k);
    let pfz = dirichlet_rows(&mut rng, k, m);
    (pzr, pfz)
}

/// Regions per parallel work unit. Partial sums are reduced in chunk order,
/// so results do not depend on the thread count.
const CHUNK: usize = 32;

/// One EM iteration. Returns the updated `(P(z|r), P(f|z))`.
pub fn em_step(matrix: &TermMatrix, k: usize, pzr: &[f64], pfz: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (matrix.rows, matrix.cols);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = c * CHUNK..((c + 1) * CHUNK).min(n);
            let mut zr_acc = vec![0.0; rows.len() * k];
            let mut fz_acc = vec![0.0; k * m];
            let mut joint = vec![0.0; k];
            for (local, i) in rows.enumerate() {
                let zr = &pzr[i * k..(i + 1) * k];
                for (j, &nij) in matrix.row(i).iter().enumerate() {
                    if nij == 0.0 {
                        continue;
                    }
                    let mut denom = 0.0;
                    for t in 0..k {
                        joint[t] = zr[t] * pfz[t * m + j];
                        denom += joint[t];
                    }
                    let scale = nij / denom.max(FLOOR);
                    for t in 0..k {
                        let r = joint[t] * scale;
                        fz_acc[t * m + j] += r;
                        zr_acc[local * k + t] += r;
                    }
                }
            }
            (zr_acc, fz_acc)
        })
        .collect();
    let mut new_pzr = Vec::with_capacity(n * k);
    let mut new_pfz = vec![0.0; k * m];
    for (zr, fz) in partials {
        new_pzr.extend(zr);
        for (a, b) in new_pfz.iter_mut().zip(fz) {
            *a += b;
        }
    }
    for t in 0..k {
        let row = &mut new_pfz[t * m..(t + 1) * m];
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            // a topic with no responsibility keeps its previous distribution
            row.copy_from_slice(&pfz[t * m..(t + 1) * m]);
        }
    }
    for i in 0..n {
        let row = &mut new_pzr[i * k..(i + 1) * k];
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            row.copy_from_slice(&pzr[i * k..(i + 1) * k]);
        }
    }
    (new_pzr, new_pfz)
}

fn loglik_raw(matrix: &TermMatrix, k: usize, pzr: &[f64], pfz: &[f64], p_r: &[f64]) -> f64 {
    let m = matrix.cols;
    let mut total = 0.0;
    for i in 0..matrix.rows {
        let zr = &pzr[i * k..(i + 1) * k];
        for (j, &nij) in matrix.row(i).iter().enumerate() {
            if nij == 0.0 {
                continue;
            }
            let p: f64 = (0..k).map(|t| zr[t] * pfz[t * m + j]).sum::<f64>() * p_r[i];
            total += nij * p.ln();
        }
    }
    total
}

/// `L = sum_ij n(r_i, f_j) log P(r_i, f_j)`; zero-weight cells contribute 0.
///
/// Returns negative infinity (and logs the offending cell) when an observed
/// cell has zero model probability.
pub fn log_likelihood(model: &PlsaModel, matrix: &TermMatrix) -> Result<f64> {
    if matrix.rows != model.regions() || matrix.cols != model.features {
        return Err(mismatch(
            "model vs term matrix",
            format!("{}x{}", model.regions(), model.features),
            format!("{}x{}", matrix.rows, matrix.cols),
        ));
    }
    let l = loglik_raw(matrix, model.topics, &model.p_z_given_r, &model.p_f_given_z, &model.p_r);
    if l == f64::NEG_INFINITY {
        warn!("log-likelihood is -inf: an observed (region, feature) cell has zero probability");
    }
    Ok(l)
}

/// Runs EM from the given initialization until the relative change of `L`
/// drops below `tol` or `max_iters` iterations have run.
pub fn train_from(
    matrix: &TermMatrix,
    k: usize,
    mut pzr: Vec<f64>,
    mut pfz: Vec<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<PlsaModel> {
    let (n, m) = (matrix.rows, matrix.cols);
    if k == 0 {
        return Err(Error::Contract("topic count must be at least 1".into()));
    }
    if pzr.len() != n * k || pfz.len() != k * m {
        return Err(mismatch(
            "initial parameter sizes",
            format!("{}+{}", n * k, k * m),
            format!("{}+{}", pzr.len(), pfz.len()),
        ));
    }
    let total = matrix.total_mass();
    let p_r: Vec<f64> = matrix.row_mass.iter().map(|r| r / total).collect();
    let mut trace = Vec::new();
    for it in 0..max_iters.max(1) {
        let (a, b) = em_step(matrix, k, &pzr, &pfz);
        pzr = a;
        pfz = b;
        let l = loglik_raw(matrix, k, &pzr, &pfz, &p_r);
        if !l.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {l} at iteration {it}")));
        }
        let converged = trace.last().is_some_and(|&prev: &f64| (l - prev).abs() < tol * l.abs());
        trace.push(l);
        if converged {
            break;
        }
    }
    Ok(PlsaModel {
        topics: k,
        features: m,
        p_f_given_z: pfz,
        p_z_given_r: pzr,
        p_r,
        iterations: trace.len(),
        loglik_trace: trace,
        seed: 0,
        tol,
        restarts: 1,
        warnings: Vec::new(),
    })
}

/// Fits a `k`-topic model, keeping the best of `cfg.restarts` seeded runs.
pub fn train(matrix: &TermMatrix, k: usize, cfg: &PlsaConfig) -> Result<PlsaModel> {
    let mut warnings = Vec::new();
    if k > matrix.rows {
        let msg = format!("{k} topics exceed {} regions; some topics will be degenerate", matrix.rows);
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut best: Option<PlsaModel> = None;
    for r in 0..cfg.restarts.max(1) {
        let seed = cfg.seed.wrapping_add(r as u64);
        let (pzr, pfz) = random_init(matrix.rows, matrix.cols, k, seed);
        let mut model = train_from(matrix, k, pzr, pfz, cfg.max_iters, cfg.tol)?;
        model.seed = seed;
        debug!("restart {r} (seed {seed}): L = {} after {} iterations", model.final_loglik(), model.iterations);
        if best.as_ref().is_none_or(|b| model.final_loglik() > b.final_loglik()) {
            best = Some(model);
        }
    }
    let mut model = best.expect("at least one restart");
    model.restarts = cfg.restarts.max(1);
    model.warnings = warnings;
    Ok(model)
}

/// Topic posterior of an unseen region plus its probability ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldIn {
    pub posterior: Vec<f64>,
    /// `(topic, probability)` by descending probability, ties by topic index.
    pub ranking: Vec<(usize, f64)>,
    pub iterations: usize,
}

/// EM restricted to one new region with `P(f|z)` frozen, started from a
/// uniform posterior.
pub fn fold_in_counts(model: &PlsaModel, counts: &[f64], max_iters: usize, tol: f64) -> Result<FoldIn> {
    if counts.len() != model.features {
        return Err(mismatch("fold-in feature length", model.features, counts.len()));
    }
    if counts.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Contract("fold-in weights must be finite and non-negative".into()));
    }
    let mass: f64 = counts.iter().sum();
    if mass <= 0.0 {
        return Err(Error::DegenerateRegion { region: u32::MAX, reason: "fold-in feature has zero mass".into() });
    }
    let (k, m) = (model.topics, model.features);
    let mut post = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    let mut joint = vec![0.0; k];
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        next.fill(0.0);
        for (j, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut denom = 0.0;
            for t in 0..k {
                joint[t] = post[t] * model.p_f_given_z[t * m + j];
                denom += joint[t];
            }
            let scale = c / denom.max(FLOOR);
            for t in 0..k {
                next[t] += joint[t] * scale;
            }
        }
        let sum: f64 = next.iter().sum();
        if sum <= 0.0 {
            break;
        }
        next.iter_mut().for_each(|v| *v /= sum);
        let change: f64 = next.iter().zip(&post).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut post, &mut next);
        if change < tol {
            break;
        }
    }
    let mut ranking: Vec<(usize, f64)> = post.iter().copied().enumerate().collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(FoldIn { posterior: post, ranking, iterations })
}

/// Folds a descriptor into a trained model.
pub fn fold_in(model: &PlsaModel, feature: &FeatureVector, max_iters: usize, tol: f64) -> Result<FoldIn> {
    fold_in_counts(model, feature.values(), max_iters, tol)
}

/// Names each topic by majority vote over the training regions whose
/// posterior argmax is that topic. Topics that win no region fall back to the
/// category with the largest summed posterior mass. Ties go to the lower id.
pub fn topic_categories(model: &PlsaModel, categories: &[CategoryId]) -> Result<Vec<CategoryId>> {
    if categories.len() != model.regions() {
        return Err(mismatch("training categories", model.regions(), categories.len()));
    }
    let c = categories.iter().copied().max().map_or(0, |m| m as usize + 1);
    let k = model.topics;
    let mut votes = vec![vec![0u64; c]; k];
    let mut soft = vec![vec![0.0; c]; k];
    for (i, &cat) in categories.iter().enumerate() {
        let post = model.region_posterior(i);
        let top = argmax(post);
        votes[top][cat as usize] += 1;
        for t in 0..k {
            soft[t][cat as usize] += post[t];
        }
    }
    Ok((0..k)
        .map(|t| {
            if votes[t].iter().any(|&v| v > 0) {
                argmax_by(&votes[t], |a, b| a.cmp(b)) as CategoryId
            } else {
                argmax(&soft[t]) as CategoryId
            }
        })
        .collect())
}

/// A trained model together with the category each topic stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledModel {
    pub model: PlsaModel,
    pub topic_category: Vec<CategoryId>,
}

impl LabeledModel {
    /// Trains on descriptors of labeled regions and names topics by majority vote.
    pub fn fit(features: &[FeatureVector], categories: &[CategoryId], k: usize, cfg: &PlsaConfig) -> Result<Self> {
        let matrix = build_term_matrix(features, cfg.scale)?;
        let model = train(&matrix, k, cfg)?;
        let topic_category = topic_categories(&model, categories)?;
        Ok(Self { model, topic_category })
    }

    pub fn rank(&self, feature: &FeatureVector, cfg: &PlsaConfig) -> Result<FoldIn> {
        fold_in(&self.model, feature, cfg.fold_in_iters, cfg.fold_in_tol)
    }

    /// Category of the top-ranked topic.
    pub fn predict(&self, feature: &FeatureVector, cfg: &PlsaConfig) -> Result<(CategoryId, FoldIn)> {
        let f = self.rank(feature, cfg)?;
        Ok((self.topic_category[f.ranking[0].0], f))
    }
}

fn argmax_by<T>(xs: &[T], cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> usize {
    let mut best = 0;
    for i in 1..xs.len() {
        if cmp(&xs[i], &xs[best]) == std::cmp::Ordering::Greater {
            best = i;
        }
    }
    best
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    argmax_by(xs, |a, b| a.total_cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_corpus() -> TermMatrix {
        TermMatrix::new(vec![
            vec![4.0, 2.0, 0.0, 0.0],
            vec![6.0, 3.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 3.0],
            vec![0.0, 0.0, 2.0, 6.0],
        ])
        .unwrap()
    }

    #[test]
    fn single_topic_is_forced_after_one_iteration() {
        let tm = block_corpus();
        let cfg = PlsaConfig { max_iters: 1, restarts: 1, ..Default::default() };
        let model = train(&tm, 1, &cfg).unwrap();
        let total = tm.total_mass();
        for j in 0..4 {
            let col: f64 = (0..4).map(|i| tm.row(i)[j]).sum();
            assert!((model.topic_row(0)[j] - col / total).abs() < 1e-15);
        }
        assert!(model.p_z_given_r.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn uniform_ones_closed_form() {
        let tm = TermMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let model = train(&tm, 1, &PlsaConfig::default()).unwrap();
        let l = log_likelihood(&model, &tm).unwrap();
        assert!((l - 4.0 * (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_cell_has_zero_loglik() {
        let tm = TermMatrix::new(vec![vec![5.0]]).unwrap();
        let model = train(&tm, 1, &PlsaConfig::default()).unwrap();
        assert_eq!(log_likelihood(&model, &tm).unwrap(), 0.0);
    }

    #[test]
    fn zero_probability_cell_gives_minus_infinity() {
        let tm = TermMatrix::new(vec![vec![1.0, 1.0]]).unwrap();
        let mut model = train(&tm, 1, &PlsaConfig::default()).unwrap();
        model.p_f_given_z = vec![1.0, 0.0];
        assert_eq!(log_likelihood(&model, &tm).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_mass_rows_are_rejected() {
        assert!(matches!(
            TermMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]),
            Err(Error::DegenerateRegion { region: 1, .. })
        ));
        let zero = FeatureVector::new(vec![0.0; 144], crate::descriptor::Normalization::L1).unwrap();
        assert!(matches!(build_term_matrix(&[zero], 1.0), Err(Error::DegenerateRegion { region: 0, .. })));
    }

    #[test]
    fn too_many_topics_is_a_warning() {
        let tm = block_corpus();
        let model = train(&tm, 6, &PlsaConfig { restarts: 1, ..Default::default() }).unwrap();
        assert_eq!(model.warnings.len(), 1);
    }

    #[test]
    fn fold_in_single_topic() {
        let tm = block_corpus();
        let model = train(&tm, 1, &PlsaConfig::default()).unwrap();
        let f = fold_in_counts(&model, &[0.0, 1.0, 5.0, 0.0], 100, 1e-12).unwrap();
        assert_eq!(f.posterior, vec![1.0]);
        assert_eq!(f.ranking, vec![(0, 1.0)]);
    }

    #[test]
    fn fold_in_rejects_wrong_length_and_zero_mass() {
        let model = train(&block_corpus(), 2, &PlsaConfig::default()).unwrap();
        assert!(fold_in_counts(&model, &[1.0; 3], 10, 1e-9).is_err());
        assert!(matches!(fold_in_counts(&model, &[0.0; 4], 10, 1e-9), Err(Error::DegenerateRegion { .. })));
    }

    #[test]
    fn majority_vote_naming() {
        let model = train(&block_corpus(), 2, &PlsaConfig::default()).unwrap();
        let names = topic_categories(&model, &[7, 7, 3, 3]).unwrap();
        let t0 = argmax(model.region_posterior(0));
        let t2 = argmax(model.region_posterior(2));
        assert_ne!(t0, t2);
        assert_eq!(names[t0], 7);
        assert_eq!(names[t2], 3);
    }
}
