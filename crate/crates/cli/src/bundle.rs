//! Model bundle: one file holding everything annotation needs.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes   "RPLSABDL"
//! version  u32
//! hlen     u64       length of the JSON header
//! header   hlen bytes
//! blobs    per header.blobs entry: rows u64, cols u64, rows*cols f64
//! ```
//!
//! Encoding is canonical: decoding then re-encoding reproduces the input
//! byte for byte.

use anyhow::{bail, ensure, Context, Result};
use regionplsa::eval::RegionOutcome;
use regionplsa::plsa::PlsaModel;
use regionplsa::{CategoryId, LabeledModel, PaddingClassifier, StrategyMap};
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const MAGIC: &[u8; 8] = b"RPLSABDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub dataset_hash: String,
    /// From `SOURCE_DATE_EPOCH`; absent otherwise so reruns stay identical.
    pub created_unix: Option<u64>,
    pub train_regions: usize,
    pub pretest_regions: usize,
}

impl Provenance {
    pub fn new(seed: u64, dataset_hash: String, train_regions: usize, pretest_regions: usize) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            dataset_hash,
            created_unix: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
            train_regions,
            pretest_regions,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub categories: Vec<String>,
    pub config: Config,
    /// The pad-O-trained model.
    pub model: LabeledModel,
    pub strategy_map: StrategyMap,
    pub classifier: PaddingClassifier,
    /// Per pretest region: top-1 under every combination and the classifier's pick.
    pub pretest: Vec<RegionOutcome>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlobInfo {
    name: String,
    rows: u64,
    cols: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    topics: usize,
    features: usize,
    regions: usize,
    seed: u64,
    iterations: usize,
    tol: f64,
    restarts: usize,
    warnings: Vec<String>,
    topic_category: Vec<CategoryId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierMeta {
    bias: f64,
    reg: f64,
    epochs: usize,
    seed: u64,
    degenerate: bool,
    training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    categories: Vec<String>,
    config: Config,
    model: ModelMeta,
    strategy_map: StrategyMap,
    classifier: ClassifierMeta,
    pretest: Vec<RegionOutcome>,
    provenance: Provenance,
    blobs: Vec<BlobInfo>,
}

struct Blob<'a> {
    name: &'static str,
    rows: usize,
    cols: usize,
    data: &'a [f64],
}

impl ModelBundle {
    fn blobs(&self) -> Vec<Blob<'_>> {
        let m = &self.model.model;
        let c = &self.classifier;
        vec![
            Blob { name: "p_f_given_z", rows: m.topics, cols: m.features, data: &m.p_f_given_z },
            Blob { name: "p_z_given_r", rows: m.regions(), cols: m.topics, data: &m.p_z_given_r },
            Blob { name: "p_r", rows: 1, cols: m.regions(), data: &m.p_r },
            Blob { name: "loglik_trace", rows: 1, cols: m.loglik_trace.len(), data: &m.loglik_trace },
            Blob { name: "classifier_weights", rows: 1, cols: c.weights.len(), data: &c.weights },
            Blob { name: "classifier_mean", rows: 1, cols: c.mean.len(), data: &c.mean },
            Blob { name: "classifier_std", rows: 1, cols: c.std.len(), data: &c.std },
        ]
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let m = &self.model.model;
        let blobs = self.blobs();
        for b in &blobs {
            ensure!(
                b.data.len() == b.rows * b.cols,
                "blob {} holds {} values, not {}x{}",
                b.name,
                b.data.len(),
                b.rows,
                b.cols
            );
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            categories: self.categories.clone(),
            config: self.config.clone(),
            model: ModelMeta {
                topics: m.topics,
                features: m.features,
                regions: m.regions(),
                seed: m.seed,
                iterations: m.iterations,
                tol: m.tol,
                restarts: m.restarts,
                warnings: m.warnings.clone(),
                topic_category: self.model.topic_category.clone(),
            },
            strategy_map: self.strategy_map.clone(),
            classifier: ClassifierMeta {
                bias: self.classifier.bias,
                reg: self.classifier.reg,
                epochs: self.classifier.epochs,
                seed: self.classifier.seed,
                degenerate: self.classifier.degenerate,
                training_accuracy: self.classifier.training_accuracy,
            },
            pretest: self.pretest.clone(),
            provenance: self.provenance.clone(),
            blobs: blobs
                .iter()
                .map(|b| BlobInfo { name: b.name.to_string(), rows: b.rows as u64, cols: b.cols as u64 })
                .collect(),
        };
        let json = serde_json::to_vec_pretty(&header)?;
        let mut out = Vec::with_capacity(json.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for b in &blobs {
            out.extend_from_slice(&(b.rows as u64).to_le_bytes());
            out.extend_from_slice(&(b.cols as u64).to_le_bytes());
            for v in b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        ensure!(r.take(8)? == MAGIC, "not a model bundle (bad magic)");
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            bail!("bundle format version {version} is not supported (expected {FORMAT_VERSION})");
        }
        let hlen = usize::try_from(r.u64()?).context("header length overflows")?;
        let header: Header = serde_json::from_slice(r.take(hlen)?).context("bundle header")?;
        ensure!(
            header.format_version == version,
            "header version {} disagrees with prefix {version}",
            header.format_version
        );

        let mut blobs = std::collections::BTreeMap::new();
        for info in &header.blobs {
            let (rows, cols) = (r.u64()?, r.u64()?);
            ensure!(
                rows == info.rows && cols == info.cols,
                "blob {} is {rows}x{cols}, header says {}x{}",
                info.name,
                info.rows,
                info.cols
            );
            let n = usize::try_from(rows.checked_mul(cols).context("blob size overflows")?)?;
            let raw = r.take(n.checked_mul(8).context("blob size overflows")?)?;
            let data: Vec<f64> =
                raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
            blobs.insert(info.name.clone(), data);
        }
        ensure!(r.pos == bytes.len(), "{} trailing bytes after the last blob", bytes.len() - r.pos);
        let mut blob = |name: &str| blobs.remove(name).with_context(|| format!("bundle lacks blob {name}"));

        let meta = header.model;
        let model = PlsaModel {
            topics: meta.topics,
            features: meta.features,
            p_f_given_z: blob("p_f_given_z")?,
            p_z_given_r: blob("p_z_given_r")?,
            p_r: blob("p_r")?,
            loglik_trace: blob("loglik_trace")?,
            seed: meta.seed,
            iterations: meta.iterations,
            tol: meta.tol,
            restarts: meta.restarts,
            warnings: meta.warnings,
        };
        ensure!(model.p_f_given_z.len() == model.topics * model.features, "P(f|z) shape disagrees with the header");
        ensure!(
            model.regions() == meta.regions && model.p_z_given_r.len() == meta.regions * model.topics,
            "P(z|r) shape disagrees with the header"
        );
        ensure!(meta.topic_category.len() == model.topics, "topic names do not cover every topic");
        let c = header.classifier;
        let classifier = PaddingClassifier {
            weights: blob("classifier_weights")?,
            bias: c.bias,
            mean: blob("classifier_mean")?,
            std: blob("classifier_std")?,
            reg: c.reg,
            epochs: c.epochs,
            seed: c.seed,
            degenerate: c.degenerate,
            training_accuracy: c.training_accuracy,
        };
        ensure!(
            classifier.weights.len() == model.features
                && classifier.mean.len() == model.features
                && classifier.std.len() == model.features,
            "classifier input length disagrees with the model"
        );
        Ok(Self {
            categories: header.categories,
            config: header.config,
            model: LabeledModel { model, topic_category: meta.topic_category },
            strategy_map: header.strategy_map,
            classifier,
            pretest: header.pretest,
            provenance: header.provenance,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).context("bundle is truncated")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
