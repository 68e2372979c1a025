use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use regionplsa::raster::{encode_png, read_png};
use regionplsa::{BBox, CategoryId, PaddingStrategy, SceneAnnotation};
use serde::Serialize;

use super::{collect_images, Global};
use crate::bundle::ModelBundle;
use crate::config::Config;
use crate::fsutil::{stem, write_atomic, write_json};
use crate::pipeline::annotate_image;

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[arg(long, value_name = "FILE")]
    pub bundle: PathBuf,
    /// PNG images or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Sidecar {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub tau: f64,
    pub regions: Vec<SidecarRegion>,
}

#[derive(Debug, Serialize)]
pub struct SidecarRegion {
    pub region: u32,
    pub bbox: BBox,
    pub area: u32,
    pub tag: Option<CategoryId>,
    pub tag_name: Option<String>,
    pub strategy_used: Option<PaddingStrategy>,
    pub ranking: Vec<SidecarRank>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SidecarRank {
    pub topic: usize,
    pub category: CategoryId,
    pub name: String,
    pub probability: f64,
}

pub fn sidecar(image: &str, out: &SceneAnnotation, names: &[String], tau: f64) -> Sidecar {
    let name = |c: CategoryId| names.get(c as usize).cloned().unwrap_or_else(|| c.to_string());
    Sidecar {
        image: image.to_string(),
        width: out.mask.width(),
        height: out.mask.height(),
        tau,
        regions: out
            .regions
            .iter()
            .map(|a| SidecarRegion {
                region: a.region,
                bbox: a.bbox,
                area: a.area,
                tag: a.tag,
                tag_name: a.tag.map(name),
                strategy_used: a.strategy_used,
                ranking: a
                    .ranking
                    .iter()
                    .map(|r| SidecarRank {
                        topic: r.topic,
                        category: r.category,
                        name: name(r.category),
                        probability: r.probability,
                    })
                    .collect(),
                diagnostic: a.diagnostic.clone(),
            })
            .collect(),
    }
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).with_context(|| format!("reading bundle {}", path.display()))?;
    ModelBundle::decode(&bytes).with_context(|| format!("loading bundle {}", path.display()))
}

/// Bundle settings, then the config file, then flags.
pub fn resolve_with_bundle(global: &Global, bundle: &ModelBundle) -> Result<Config> {
    global.resolve(&bundle.config)
}

pub fn run(args: &AnnotateArgs, global: &Global) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let cfg = resolve_with_bundle(global, &bundle)?;
    let images = collect_images(&args.inputs)?;
    images.par_iter().try_for_each(|path| -> Result<()> {
        let image = std::sync::Arc::new(read_png(path).with_context(|| format!("reading {}", path.display()))?);
        let out = annotate_image(&image, &bundle, &cfg).with_context(|| path.display().to_string())?;
        let name = stem(path);
        write_atomic(&global.out.join(format!("{name}.annotated.png")), &encode_png(&out.overlay)?)?;
        write_json(
            &global.out.join(format!("{name}.annotations.json")),
            &sidecar(&path.display().to_string(), &out, &bundle.categories, cfg.tau),
        )
    })?;
    println!("annotated {} images into {}", images.len(), global.out.display());
    Ok(())
}
