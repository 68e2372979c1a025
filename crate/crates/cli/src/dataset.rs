//! In-memory labeled datasets and their JSON Lines manifest form.
//!
//! A manifest starts with one header line carrying the category name table,
//! followed by one line per image. Paths are relative to the manifest's
//! directory.

use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use regionplsa::raster::{read_mask_png, read_png};
use regionplsa::{CategoryId, RasterImage, RegionMask};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Pretest,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Pretest, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Pretest => "pretest",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub categories: Vec<String>,
}

/// One manifest line. `regions[l]` is the category of mask label `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default)]
    pub regions: Vec<CategoryId>,
    pub split: Split,
    #[serde(default)]
    pub scene: String,
}

#[derive(Debug, Clone)]
pub struct Item {
    pub name: String,
    pub scene: String,
    pub split: Split,
    pub image: Arc<RasterImage>,
    pub mask: Option<RegionMask>,
    pub regions: Vec<CategoryId>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub categories: Vec<String>,
    pub items: Vec<Item>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Item> + '_ {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn split_sizes(&self) -> [(Split, usize); 3] {
        Split::ALL.map(|s| (s, self.split(s).count()))
    }

    /// Checks masks against images and category ids against the name table.
    pub fn validate(&self) -> Result<()> {
        for item in &self.items {
            let Some(mask) = &item.mask else { continue };
            if mask.width() != item.image.width() || mask.height() != item.image.height() {
                bail!(
                    "{}: mask is {}x{} but image is {}x{}",
                    item.name,
                    mask.width(),
                    mask.height(),
                    item.image.width(),
                    item.image.height()
                );
            }
            if item.regions.len() != mask.region_count() as usize {
                bail!(
                    "{}: mask has {} region labels but {} categories are listed",
                    item.name,
                    mask.region_count(),
                    item.regions.len()
                );
            }
            if let Some(c) = item.regions.iter().find(|&&c| c as usize >= self.categories.len()) {
                bail!("{}: category id {c} is outside the {}-name table", item.name, self.categories.len());
            }
        }
        Ok(())
    }

    /// SHA-256 over names, splits, pixels, labels and categories, in order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.categories {
            h.update(c.as_bytes());
            h.update([0]);
        }
        for item in &self.items {
            h.update(item.name.as_bytes());
            h.update([0]);
            h.update(item.scene.as_bytes());
            h.update([0]);
            h.update(item.split.as_str().as_bytes());
            h.update(item.image.width().to_le_bytes());
            h.update(item.image.height().to_le_bytes());
            h.update(item.image.pixels());
            if let Some(m) = &item.mask {
                for l in m.labels() {
                    h.update(l.to_le_bytes());
                }
            }
            for c in &item.regions {
                h.update(c.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Reads a manifest and every image and mask it references.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).with_context(|| format!("opening manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: ManifestHeader = loop {
        match lines.next() {
            Some((n, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .with_context(|| format!("{}:{}: bad manifest header", path.display(), n + 1))?;
            }
            None => bail!("{}: empty manifest", path.display()),
        }
    };
    let mut items = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad manifest entry", path.display(), n + 1))?;
        items.push(load_entry(base, entry).with_context(|| format!("{}:{}", path.display(), n + 1))?);
    }
    let ds = Dataset { categories: header.categories, items };
    ds.validate()?;
    let sizes = ds.split_sizes();
    log::info!(
        "manifest {}: {} train / {} pretest / {} test images",
        path.display(),
        sizes[0].1,
        sizes[1].1,
        sizes[2].1
    );
    Ok(ds)
}

fn load_entry(base: &Path, entry: ManifestEntry) -> Result<Item> {
    let image_path = base.join(&entry.image);
    let image = read_png(&image_path).with_context(|| format!("reading image {}", image_path.display()))?;
    let mask = match &entry.mask {
        Some(m) => {
            let p = base.join(m);
            Some(read_mask_png(&p).with_context(|| format!("reading mask {}", p.display()))?)
        }
        None => None,
    };
    let name = entry
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.image.display().to_string());
    Ok(Item { name, scene: entry.scene, split: entry.split, image: Arc::new(image), mask, regions: entry.regions })
}

/// Renders the manifest text for `ds`, with images under `images/` and
/// masks under `masks/`.
pub fn manifest_text(ds: &Dataset) -> Result<String> {
    let mut out = serde_json::to_string(&ManifestHeader { categories: ds.categories.clone() })?;
    out.push('\n');
    for item in &ds.items {
        let entry = ManifestEntry {
            image: PathBuf::from(format!("images/{}.png", item.name)),
            mask: item.mask.as_ref().map(|_| PathBuf::from(format!("masks/{}.png", item.name))),
            regions: item.regions.clone(),
            split: item.split,
            scene: item.scene.clone(),
        };
        out.push_str(&serde_json::to_string(&entry)?);
        out.push('\n');
    }
    Ok(out)
}
