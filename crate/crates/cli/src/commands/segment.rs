use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use regionplsa::raster::{encode_mask_png, read_png};
use regionplsa::{extract_regions, segment, BBox};
use serde::Serialize;

use super::{collect_images, Global};
use crate::config::Config;
use crate::fsutil::{stem, write_atomic, write_json};

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    /// PNG images or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct SegmentSummary {
    image: String,
    width: u32,
    height: u32,
    tm: f64,
    regions: Vec<RegionSummary>,
}

#[derive(Serialize)]
struct RegionSummary {
    region: u32,
    bbox: BBox,
    area: u32,
}

pub fn run(args: &SegmentArgs, global: &Global) -> Result<()> {
    let cfg = global.resolve(&Config::default())?;
    let images = collect_images(&args.inputs)?;
    images.par_iter().try_for_each(|path| -> Result<()> {
        let image = std::sync::Arc::new(read_png(path).with_context(|| format!("reading {}", path.display()))?);
        let mask = segment(&image, &cfg.segmenter).with_context(|| path.display().to_string())?;
        let regions = extract_regions(&mask, &image)?
            .iter()
            .map(|r| RegionSummary { region: r.id, bbox: r.bbox, area: r.area })
            .collect();
        let name = stem(path);
        write_atomic(&global.out.join(format!("{name}.mask.png")), &encode_mask_png(&mask)?)?;
        write_json(
            &global.out.join(format!("{name}.segments.json")),
            &SegmentSummary {
                image: path.display().to_string(),
                width: image.width(),
                height: image.height(),
                tm: cfg.segmenter.tm,
                regions,
            },
        )
    })?;
    println!("segmented {} images into {}", images.len(), global.out.display());
    Ok(())
}
