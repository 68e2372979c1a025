use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use super::Global;
use crate::config::Config;
use crate::dataset::load_manifest;
use crate::fsutil::{write_atomic, write_json};
use crate::pipeline;

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Bundle file name inside the output directory.
    #[arg(long, default_value = "model.bundle")]
    pub bundle_name: String,
}

pub fn run(args: &TrainArgs, global: &Global) -> Result<()> {
    let cfg = global.resolve(&Config::default())?;
    let ds = load_manifest(&args.manifest)?;
    let (bundle, report) = pipeline::train(&ds, &cfg)?;
    let path = global.out.join(&args.bundle_name);
    write_atomic(&path, &bundle.encode()?)?;
    write_json(&global.out.join("train_report.json"), &report)?;
    write_atomic(&global.out.join("pretest.csv"), report.pretest.to_csv(&bundle.categories)?.as_bytes())?;
    let c = &report.comparison;
    println!(
        "trained K={} on {} regions; pretest O/O {}/{} O/Z {}/{} ideal {} adaptive {}; bundle {}",
        report.topics,
        report.train_regions,
        c.fixed[0],
        c.total,
        c.fixed[2],
        c.total,
        c.ideal,
        c.adaptive,
        path.display()
    );
    Ok(())
}
