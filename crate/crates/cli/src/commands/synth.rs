use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use regionplsa::raster::{encode_mask_png, encode_png};

use super::Global;
use crate::corpus::{table1, CorpusSpec};
use crate::dataset::manifest_text;
use crate::exit::UsageError;
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Five scenes over eight categories.
    Table1,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Corpus specification (JSON, or TOML by extension).
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in corpus.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

pub fn load_spec(args: &SynthArgs) -> Result<CorpusSpec> {
    match (&args.spec, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if path.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
            } else {
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
            }
        }
        (None, Some(Preset::Table1)) => Ok(table1()),
        (None, None) => Err(UsageError("synth needs --spec or --preset".into()).into()),
    }
}

pub fn run(args: &SynthArgs, global: &Global) -> Result<()> {
    let mut spec = load_spec(args)?;
    if let Some(s) = global.seed {
        spec.seed = s;
    }
    let ds = spec.generate()?;
    let out = &global.out;
    ds.items.par_iter().try_for_each(|item| -> Result<()> {
        write_atomic(&out.join(format!("images/{}.png", item.name)), &encode_png(&item.image)?)?;
        if let Some(m) = &item.mask {
            write_atomic(&out.join(format!("masks/{}.png", item.name)), &encode_mask_png(m)?)?;
        }
        Ok(())
    })?;
    write_atomic(&out.join("manifest.jsonl"), manifest_text(&ds)?.as_bytes())?;
    let sizes = ds.split_sizes();
    println!(
        "wrote {} images ({} train / {} pretest / {} test) over {} categories to {}",
        ds.items.len(),
        sizes[0].1,
        sizes[1].1,
        sizes[2].1,
        ds.categories.len(),
        out.display()
    );
    Ok(())
}
