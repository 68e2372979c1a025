use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use super::annotate::{load_bundle, resolve_with_bundle};
use super::Global;
use crate::dataset::load_manifest;
use crate::fsutil::{write_atomic, write_json};
use crate::pipeline::evaluate;

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub bundle: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
}

/// Writes `pretest.csv`, `pretest_oo.csv`, `pretest_oz.csv`, `adaptive.csv`,
/// `prf.csv` and the full-precision `evaluation.json`.
pub fn run(args: &EvaluateArgs, global: &Global) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let cfg = resolve_with_bundle(global, &bundle)?;
    let ds = load_manifest(&args.manifest)?;
    let report = evaluate(&bundle, &ds, &cfg)?;
    let names = &bundle.categories;
    let out = &global.out;
    write_atomic(&out.join("pretest.csv"), report.pretest.to_csv(names)?.as_bytes())?;
    write_atomic(&out.join("pretest_oo.csv"), report.pretest_oo.to_percent_csv(names)?.as_bytes())?;
    write_atomic(&out.join("pretest_oz.csv"), report.pretest_oz.to_percent_csv(names)?.as_bytes())?;
    write_atomic(&out.join("adaptive.csv"), report.comparison.to_csv()?.as_bytes())?;
    write_atomic(&out.join("prf.csv"), report.prf.to_csv(names)?.as_bytes())?;
    write_json(&out.join("evaluation.json"), &report)?;
    println!(
        "macro P {:.3} R {:.3} F {:.3} over {} test images; mean segmentation agreement {:.3}",
        report.prf.macro_precision,
        report.prf.macro_recall,
        report.prf.macro_f,
        report.images.len(),
        report.mean_segmentation_agreement
    );
    Ok(())
}
