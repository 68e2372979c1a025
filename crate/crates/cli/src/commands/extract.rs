use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use regionplsa::CategoryId;
use serde::Serialize;

use super::Global;
use crate::config::Config;
use crate::dataset::{load_manifest, Split};
use crate::fsutil::write_atomic;
use crate::pipeline::{describe, labeled_regions};

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct FeatureLine<'a> {
    image: &'a str,
    region: u32,
    split: Split,
    category: CategoryId,
    area: u32,
    pad_o: &'a [f64],
    pad_z: &'a [f64],
}

/// One JSON line per labeled region above the area filter.
pub fn run(args: &ExtractArgs, global: &Global) -> Result<()> {
    let cfg = global.resolve(&Config::default())?;
    let ds = load_manifest(&args.manifest)?;
    let mut text = String::new();
    let mut count = 0;
    for split in Split::ALL {
        let regions = labeled_regions(&ds, split, cfg.min_area_fraction)?;
        let feats = describe(&regions, &cfg)?;
        for (i, (name, r)) in regions.iter().enumerate() {
            let line = FeatureLine {
                image: name,
                region: r.id,
                split,
                category: feats.categories[i],
                area: r.area,
                pad_o: feats.pad_o[i].values(),
                pad_z: feats.pad_z[i].values(),
            };
            text.push_str(&serde_json::to_string(&line)?);
            text.push('\n');
            count += 1;
        }
    }
    let path = global.out.join("features.jsonl");
    write_atomic(&path, text.as_bytes())?;
    println!("wrote {count} region descriptors to {}", path.display());
    Ok(())
}
