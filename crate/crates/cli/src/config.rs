//! Run configuration. Layers apply in order built-in default, bundle (when
//! annotating with a trained model), config file, command-line flag.

use std::path::Path;

use anyhow::{Context, Result};
use regionplsa::{AnnotatorConfig, ClassifierConfig, DescriptorConfig, OverlayStyle, PlsaConfig, SegmenterConfig};
use serde::{Deserialize, Serialize};

use crate::exit::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Master seed; drives pLSA restarts and classifier shuffling.
    pub seed: u64,
    /// Topic count; the category count when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topics: Option<usize>,
    /// Minimum top posterior for a tag.
    pub tau: f64,
    /// Regions below this fraction of the image area are not described.
    pub min_area_fraction: f64,
    pub segmenter: SegmenterConfig,
    pub descriptor: DescriptorConfig,
    pub plsa: PlsaConfig,
    pub classifier: ClassifierConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            topics: None,
            tau: 0.3,
            min_area_fraction: 0.01,
            segmenter: SegmenterConfig::default(),
            descriptor: DescriptorConfig::default(),
            plsa: PlsaConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub tm: Option<f64>,
}

fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Config {
    /// Lays the TOML text over `self`; keys absent from the text keep their value.
    pub fn layer_toml(&self, text: &str) -> Result<Config> {
        let top: toml::Value = toml::from_str(text).context("parsing config")?;
        let mut base = toml::Value::try_from(self).context("encoding config")?;
        merge(&mut base, top);
        base.try_into().context("config has invalid values")
    }

    pub fn layer_file(&self, path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.layer_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn layer_flags(mut self, o: &Overrides) -> Config {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.tau {
            self.tau = t;
        }
        if let Some(t) = o.tm {
            self.segmenter.tm = t;
        }
        self
    }

    /// `base`, then the optional file, then the flags.
    pub fn resolve(base: &Config, file: Option<&Path>, flags: &Overrides) -> Result<Config> {
        let cfg = match file {
            Some(p) => base.layer_file(p)?,
            None => base.clone(),
        };
        let cfg = cfg.layer_flags(flags);
        cfg.validate().map_err(|e| UsageError(format!("invalid configuration: {e:#}")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        anyhow::ensure!((0.0..=1.0).contains(&self.min_area_fraction), "min_area_fraction must lie in [0, 1]");
        anyhow::ensure!(self.tau.is_finite() && self.tau >= 0.0, "tau must be a non-negative number");
        anyhow::ensure!(self.topics != Some(0), "topics must be positive");
        self.segmenter.validate()?;
        Ok(())
    }

    /// pLSA settings with the master seed applied.
    pub fn plsa(&self) -> PlsaConfig {
        PlsaConfig { seed: self.seed, ..self.plsa.clone() }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig { seed: self.seed, ..self.classifier.clone() }
    }

    pub fn annotator(&self, names: &[String]) -> AnnotatorConfig {
        AnnotatorConfig {
            segmenter: self.segmenter.clone(),
            min_area_fraction: self.min_area_fraction,
            tau: self.tau,
            descriptor: self.descriptor,
            fold_in_iters: self.plsa.fold_in_iters,
            fold_in_tol: self.plsa.fold_in_tol,
            overlay: OverlayStyle { names: names.to_vec(), ..OverlayStyle::default() },
        }
    }
}
