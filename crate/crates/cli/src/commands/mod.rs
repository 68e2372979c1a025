//! Subcommands. Each takes parsed arguments, resolves its configuration and
//! writes its outputs under `--out`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};

use crate::config::{Config, Overrides};
use crate::exit::UsageError;

pub mod annotate;
pub mod evaluate;
pub mod extract;
pub mod segment;
pub mod synth;
pub mod train;

/// Options accepted by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Tag threshold on the top posterior.
    #[arg(long, global = true, value_name = "F")]
    pub tau: Option<f64>,
    /// Color-merge threshold of the segmenter.
    #[arg(long, global = true, value_name = "F")]
    pub tm: Option<f64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

impl Global {
    pub fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, tau: self.tau, tm: self.tm }
    }

    pub fn resolve(&self, base: &Config) -> Result<Config> {
        Config::resolve(base, self.config.as_deref(), &self.overrides())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic corpus and its manifest.
    Synth(synth::SynthArgs),
    /// Segment images into region masks.
    Segment(segment::SegmentArgs),
    /// Write region descriptors of a manifest under both paddings.
    Extract(extract::ExtractArgs),
    /// Train a model bundle from a manifest.
    Train(train::TrainArgs),
    /// Annotate images with a trained bundle.
    Annotate(annotate::AnnotateArgs),
    /// Score a bundle on a manifest's test split.
    Evaluate(evaluate::EvaluateArgs),
}

pub fn run(cmd: &Command, global: &Global) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth::run(a, global),
        Command::Segment(a) => segment::run(a, global),
        Command::Extract(a) => extract::run(a, global),
        Command::Train(a) => train::run(a, global),
        Command::Annotate(a) => annotate::run(a, global),
        Command::Evaluate(a) => evaluate::run(a, global),
    }
}

/// PNG files named directly or found (non-recursively, sorted) in directories.
pub fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(UsageError("no input images given".into()).into());
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_png(f))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            anyhow::bail!("{} does not exist", p.display());
        }
    }
    Ok(out)
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}
