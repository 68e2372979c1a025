//! JSEG-style unsupervised segmentation.
//!
//! 1. Colors are quantized into a class map: a coarse Lab histogram seeds a
//!    palette, Lloyd iterations refine it, and agglomerative merging joins
//!    classes closer than the merge threshold `tm`.
//! 2. A per-pixel J map measures how mixed the classes are around each pixel.
//! 3. Low-J areas become seeds, which grow into unlabeled pixels in order of
//!    ascending J. Regions below `min_region_px` are folded into their most
//!    color-similar neighbor.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{rgb_to_lab, Lab};
use crate::error::{mismatch, Error, Result};
use crate::raster::{RasterImage, RegionMask};

/// Histogram bins per Lab axis for the initial palette.
const LAB_LEVELS: usize = 16;
/// Most populous histogram cells kept as initial palette entries.
const MAX_INITIAL_COLORS: usize = 32;
const LLOYD_ITERATIONS: usize = 10;
const LLOYD_SEED: u64 = 0x6a5e_6d5e;
/// Lower bound (Lab units) on the distance normalizer, so a palette of two
/// near-identical colors is not stretched to a normalized distance of 1.
const MIN_NORMALIZER: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Merge threshold on normalized palette distances.
    pub tm: f64,
    /// Odd square window sides for the J map; the largest drives seeding.
    pub window_sizes: Vec<u32>,
    /// Seed threshold on J. `None` uses mean + 0.2 standard deviations.
    pub j_threshold: Option<f64>,
    /// Regions smaller than this are merged away.
    pub min_region_px: u32,
    /// Seed components smaller than this are discarded before growing.
    pub min_seed_px: u32,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self { tm: 0.55, window_sizes: vec![9], j_threshold: None, min_region_px: 48, min_seed_px: 24 }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tm.is_nan() || self.tm <= 0.0 {
            return Err(Error::Contract(format!("tm must be positive, got {}", self.tm)));
        }
        if self.window_sizes.is_empty() {
            return Err(Error::Contract("at least one window size is required".into()));
        }
        if let Some(w) = self.window_sizes.iter().find(|&&w| w < 3 || w % 2 == 0) {
            return Err(Error::Contract(format!("window side {w} must be odd and >= 3")));
        }
        Ok(())
    }
}

/// Per-pixel color-class indices with one Lab representative per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorClassMap {
    width: u32,
    height: u32,
    classes: Vec<u32>,
    palette: Vec<Lab>,
}

impl ColorClassMap {
    pub fn new(width: u32, height: u32, classes: Vec<u32>, palette: Vec<Lab>) -> Result<Self> {
        if classes.len() != width as usize * height as usize || classes.is_empty() {
            return Err(mismatch("class map length", width as usize * height as usize, classes.len()));
        }
        let mut used = vec![false; palette.len()];
        for &c in &classes {
            match used.get_mut(c as usize) {
                Some(u) => *u = true,
                None => return Err(Error::Contract(format!("class {c} has no palette entry"))),
            }
        }
        if used.iter().any(|u| !u) {
            return Err(Error::Contract("class indices are not contiguous".into()));
        }
        Ok(Self { width, height, classes, palette })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn palette(&self) -> &[Lab] {
        &self.palette
    }

    pub fn class_count(&self) -> usize {
        self.palette.len()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.classes[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Clone, Copy)]
struct Cluster {
    lab: Lab,
    weight: f64,
}

fn nearest(centers: &[Lab], p: &Lab) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = c.distance(p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn initial_palette(colors: &[(Lab, f64)]) -> Vec<Lab> {
    let cell = |lab: &Lab| {
        let q = |v: f64, lo: f64, hi: f64| {
            (((v - lo) / (hi - lo) * LAB_LEVELS as f64).floor() as isize).clamp(0, LAB_LEVELS as isize - 1) as usize
        };
        (q(lab.l, 0.0, 100.0) * LAB_LEVELS + q(lab.a, -128.0, 128.0)) * LAB_LEVELS + q(lab.b, -128.0, 128.0)
    };
    let mut cells: BTreeMap<usize, (f64, f64, f64, f64)> = BTreeMap::new();
    for (lab, w) in colors {
        let e = cells.entry(cell(lab)).or_default();
        e.0 += w;
        e.1 += w * lab.l;
        e.2 += w * lab.a;
        e.3 += w * lab.b;
    }
    let mut ranked: Vec<_> = cells.into_iter().collect();
    // most populous first; BTreeMap order breaks ties by cell index
    ranked.sort_by(|a, b| b.1 .0.total_cmp(&a.1 .0));
    ranked.into_iter().take(MAX_INITIAL_COLORS).map(|(_, (w, l, a, b))| Lab { l: l / w, a: a / w, b: b / w }).collect()
}

fn lloyd(colors: &[(Lab, f64)], mut centers: Vec<Lab>) -> Vec<Cluster> {
    let mut rng = ChaCha8Rng::seed_from_u64(LLOYD_SEED);
    let mut weights = vec![0.0; centers.len()];
    for _ in 0..LLOYD_ITERATIONS {
        let mut sums = vec![(0.0, 0.0, 0.0, 0.0); centers.len()];
        for (lab, w) in colors {
            let s = &mut sums[nearest(&centers, lab)];
            s.0 += w;
            s.1 += w * lab.l;
            s.2 += w * lab.a;
            s.3 += w * lab.b;
        }
        for (k, s) in sums.iter().enumerate() {
            if s.0 > 0.0 {
                centers[k] = Lab { l: s.1 / s.0, a: s.2 / s.0, b: s.3 / s.0 };
            } else {
                centers[k] = colors[rng.random_range(0..colors.len())].0;
            }
            weights[k] = s.0;
        }
    }
    // final weights for the refined centers
    weights.iter_mut().for_each(|w| *w = 0.0);
    for (lab, w) in colors {
        weights[nearest(&centers, lab)] += w;
    }
    centers.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).map(|(lab, weight)| Cluster { lab, weight }).collect()
}

/// Merges the closest pair of clusters while their normalized distance is at
/// most `tm`. Distances are divided by the largest pairwise distance of the
/// starting palette (never less than [`MIN_NORMALIZER`]).
fn agglomerate(mut clusters: Vec<Cluster>, tm: f64) -> Vec<Cluster> {
    let mut max_d: f64 = 0.0;
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            max_d = max_d.max(clusters[i].lab.distance(&clusters[j].lab));
        }
    }
    let norm = max_d.max(MIN_NORMALIZER);
    while clusters.len() > 1 {
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = clusters[i].lab.distance(&clusters[j].lab) / norm;
                if d < best.2 {
                    best = (i, j, d);
                }
            }
        }
        let (i, j, d) = best;
        if d > tm {
            break;
        }
        let (a, b) = (clusters[i], clusters[j]);
        let w = a.weight + b.weight;
        clusters[i] = Cluster {
            lab: Lab {
                l: (a.lab.l * a.weight + b.lab.l * b.weight) / w,
                a: (a.lab.a * a.weight + b.lab.a * b.weight) / w,
                b: (a.lab.b * a.weight + b.lab.b * b.weight) / w,
            },
            weight: w,
        };
        clusters.remove(j);
    }
    clusters
}

/// Quantizes `image` into a color-class map with merge threshold `tm`.
pub fn quantize_colors(image: &RasterImage, tm: f64) -> ColorClassMap {
    let mut counts: HashMap<[u8; 3], u32> = HashMap::new();
    for p in image.iter_rgb() {
        *counts.entry(p).or_default() += 1;
    }
    let mut unique: Vec<_> = counts.into_iter().collect();
    unique.sort_unstable_by_key(|(rgb, _)| *rgb);
    let lab_of: HashMap<[u8; 3], Lab> = unique.iter().map(|(rgb, _)| (*rgb, rgb_to_lab(*rgb))).collect();
    let colors: Vec<(Lab, f64)> = unique.iter().map(|(rgb, n)| (lab_of[rgb], *n as f64)).collect();

    let clusters = agglomerate(lloyd(&colors, initial_palette(&colors)), tm);
    let centers: Vec<Lab> = clusters.iter().map(|c| c.lab).collect();

    let raw: Vec<usize> = image.iter_rgb().map(|p| nearest(&centers, &lab_of[&p])).collect();
    let mut used = vec![false; centers.len()];
    for &c in &raw {
        used[c] = true;
    }
    let mut remap = vec![0u32; centers.len()];
    let mut palette = Vec::new();
    for (k, _) in used.iter().enumerate().filter(|(_, u)| **u) {
        remap[k] = palette.len() as u32;
        palette.push(centers[k]);
    }
    let classes = raw.into_iter().map(|c| remap[c]).collect();
    ColorClassMap::new(image.width(), image.height(), classes, palette)
        .expect("quantizer produces a contiguous class map")
}

/// Accumulates position statistics over a clipped window. Coordinates are
/// integers, so the sums are exact.
fn window_j(map: &ColorClassMap, cx: i64, cy: i64, side: u32, acc: &mut Vec<[i64; 4]>) -> Option<f64> {
    let half = side as i64 / 2;
    let x0 = (cx - half).max(0);
    let y0 = (cy - half).max(0);
    let x1 = (cx + half).min(map.width as i64 - 1);
    let y1 = (cy + half).min(map.height as i64 - 1);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    acc.clear();
    acc.resize(map.class_count(), [0; 4]);
    let mut total = [0i64; 4];
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x - cx, y - cy);
            let a = &mut acc[map.get(x as u32, y as u32) as usize];
            a[0] += 1;
            a[1] += dx;
            a[2] += dy;
            a[3] += dx * dx + dy * dy;
        }
    }
    let mut present = 0;
    for a in acc.iter().filter(|a| a[0] > 0) {
        present += 1;
        for k in 0..4 {
            total[k] += a[k];
        }
    }
    if total[0] < 2 {
        return None;
    }
    let scatter = |a: &[i64; 4]| {
        let n = a[0] as f64;
        a[3] as f64 - (a[1] * a[1] + a[2] * a[2]) as f64 / n
    };
    if present == 1 {
        return Some(0.0);
    }
    let s_t = scatter(&total);
    // summed in value order so J does not depend on class numbering
    let mut terms: Vec<f64> = acc.iter().filter(|a| a[0] > 0).map(scatter).collect();
    terms.sort_by(f64::total_cmp);
    let s_w: f64 = terms.iter().sum();
    if s_w <= 0.0 {
        // every class is a single pixel: S_W is floored at one squared pixel
        return Some(s_t);
    }
    Some(((s_t - s_w) / s_w).max(0.0))
}

/// J = (S_T - S_W) / S_W over the square window of side `side` centered at
/// `center`, clipped to the map. A single-class window has J = 0.
pub fn compute_j(map: &ColorClassMap, center: (i64, i64), side: u32) -> Result<f64> {
    let mut acc = Vec::new();
    window_j(map, center.0, center.1, side, &mut acc).ok_or_else(|| {
        Error::Contract(format!(
            "window of side {side} at {center:?} covers fewer than two pixels of the {}x{} map",
            map.width, map.height
        ))
    })
}

/// Per-pixel J values for one window size.
pub fn j_map(map: &ColorClassMap, side: u32) -> Vec<f64> {
    let w = map.width as usize;
    let mut out = vec![0.0; map.classes.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut acc = Vec::new();
        for (x, j) in row.iter_mut().enumerate() {
            *j = window_j(map, x as i64, y as i64, side, &mut acc).unwrap_or(0.0);
        }
    });
    out
}

const UNLABELED: u32 = u32::MAX;

fn neighbors(idx: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (idx % w, idx / w);
    [(y > 0).then(|| idx - w), (x > 0).then(|| idx - 1), (x + 1 < w).then(|| idx + 1), (y + 1 < h).then(|| idx + w)]
        .into_iter()
        .flatten()
}

/// Labels 4-connected components of unlabeled pixels where `member` holds.
/// Returns component sizes.
fn label_components(
    labels: &mut [u32],
    w: usize,
    h: usize,
    member: impl Fn(usize) -> bool,
    first_label: u32,
) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        if labels[start] != UNLABELED || !member(start) {
            continue;
        }
        let id = first_label + sizes.len() as u32;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            for n in neighbors(p, w, h) {
                if labels[n] == UNLABELED && member(n) {
                    labels[n] = id;
                    stack.push(n);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Minimum share of a region's pixels that must carry a pixel's color class
/// before the pixel may join that region.
const MIN_CLASS_SHARE: f64 = 0.1;

fn grow(labels: &mut [u32], classes: &[u32], class_count: usize, regions: usize, order_j: &[f64], w: usize, h: usize) {
    let mut hist = vec![0u64; regions * class_count];
    let mut size = vec![0u64; regions];
    for (i, &l) in labels.iter().enumerate().filter(|(_, l)| **l != UNLABELED) {
        hist[l as usize * class_count + classes[i] as usize] += 1;
        size[l as usize] += 1;
    }
    let key = |j: f64| j.max(0.0).to_bits();
    let mut heap = BinaryHeap::new();
    for i in 0..labels.len() {
        if labels[i] == UNLABELED && neighbors(i, w, h).any(|n| labels[n] != UNLABELED) {
            heap.push(Reverse((key(order_j[i]), i)));
        }
    }
    let mut votes: BTreeMap<u32, u32> = BTreeMap::new();
    while let Some(Reverse((_, p))) = heap.pop() {
        if labels[p] != UNLABELED {
            continue;
        }
        // join the adjacent region with the most neighbors among those where
        // this pixel's class is common; otherwise wait
        votes.clear();
        let c = classes[p] as usize;
        for n in neighbors(p, w, h) {
            let l = labels[n];
            if l != UNLABELED && hist[l as usize * class_count + c] as f64 >= MIN_CLASS_SHARE * size[l as usize] as f64
            {
                *votes.entry(l).or_default() += 1;
            }
        }
        let Some((&region, _)) = votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            continue;
        };
        labels[p] = region;
        hist[region as usize * class_count + c] += 1;
        size[region as usize] += 1;
        for n in neighbors(p, w, h) {
            if labels[n] == UNLABELED {
                heap.push(Reverse((key(order_j[n]), n)));
            }
        }
    }
}

/// Greedily merges the smallest region below `min_px` into the adjacent
/// region with the closest mean color until none remain (or one region is left).
fn merge_small(labels: &mut [u32], labs: &[Lab], w: usize, h: usize, min_px: u32) {
    let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut size = vec![0u64; count];
    let mut sum = vec![[0.0f64; 3]; count];
    let mut adj: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        size[l as usize] += 1;
        sum[l as usize][0] += labs[i].l;
        sum[l as usize][1] += labs[i].a;
        sum[l as usize][2] += labs[i].b;
        for n in neighbors(i, w, h) {
            if labels[n] != l {
                adj[l as usize].insert(labels[n]);
            }
        }
    }
    let mut parent: Vec<u32> = (0..count as u32).collect();
    let mean = |s: &[f64; 3], n: u64| Lab { l: s[0] / n as f64, a: s[1] / n as f64, b: s[2] / n as f64 };
    let mut alive: BTreeSet<u32> = (0..count as u32).collect();
    while alive.len() > 1 {
        let Some(&small) =
            alive.iter().filter(|&&r| size[r as usize] < min_px as u64).min_by_key(|&&r| (size[r as usize], r))
        else {
            break;
        };
        let here = mean(&sum[small as usize], size[small as usize]);
        let Some(&target) = adj[small as usize].iter().min_by(|&&a, &&b| {
            let da = mean(&sum[a as usize], size[a as usize]).distance(&here);
            let db = mean(&sum[b as usize], size[b as usize]).distance(&here);
            da.total_cmp(&db).then(a.cmp(&b))
        }) else {
            break;
        };
        parent[small as usize] = target;
        size[target as usize] += size[small as usize];
        let moved_sum = sum[small as usize];
        for (t, m) in sum[target as usize].iter_mut().zip(moved_sum) {
            *t += m;
        }
        let moved = std::mem::take(&mut adj[small as usize]);
        for n in moved {
            adj[n as usize].remove(&small);
            if n != target {
                adj[n as usize].insert(target);
                adj[target as usize].insert(n);
            }
        }
        adj[target as usize].remove(&small);
        alive.remove(&small);
    }
    let root = |mut r: u32| {
        while parent[r as usize] != r {
            r = parent[r as usize];
        }
        r
    };
    for l in labels.iter_mut() {
        *l = root(*l);
    }
}

/// Segments `image` into 4-connected regions.
pub fn segment(image: &RasterImage, cfg: &SegmenterConfig) -> Result<RegionMask> {
    cfg.validate()?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w * h < 2 {
        return RegionMask::new(image.width(), image.height(), vec![0; w * h]);
    }
    let map = quantize_colors(image, cfg.tm);
    let classes = map.classes();

    let mut sides = cfg.window_sizes.clone();
    sides.sort_unstable();
    let seed_j = j_map(&map, *sides.last().expect("validated non-empty"));
    let order_j = if sides.len() > 1 { j_map(&map, sides[0]) } else { seed_j.clone() };

    let threshold = cfg.j_threshold.unwrap_or_else(|| {
        let n = seed_j.len() as f64;
        let mean = seed_j.iter().sum::<f64>() / n;
        let var = seed_j.iter().map(|j| (j - mean) * (j - mean)).sum::<f64>() / n;
        mean + 0.2 * var.sqrt()
    });

    let mut labels = vec![UNLABELED; w * h];
    let sizes = label_components(&mut labels, w, h, |i| seed_j[i] <= threshold, 0);
    let min_seed = cfg.min_seed_px.max(1) as usize;
    let mut keep = vec![UNLABELED; sizes.len()];
    let mut kept = 0;
    for (id, &s) in sizes.iter().enumerate() {
        if s >= min_seed {
            keep[id] = kept;
            kept += 1;
        }
    }
    for l in labels.iter_mut().filter(|l| **l != UNLABELED) {
        *l = keep[*l as usize];
    }
    if kept == 0 {
        return RegionMask::new(image.width(), image.height(), vec![0; w * h]);
    }

    grow(&mut labels, classes, map.class_count(), kept as usize, &order_j, w, h);
    // unreached pixels form regions of their own
    label_components(&mut labels, w, h, |_| true, kept);

    let labs: Vec<Lab> = image.iter_rgb().map(rgb_to_lab).collect();
    merge_small(&mut labels, &labs, w, h, cfg.min_region_px);
    RegionMask::canonicalize(image.width(), image.height(), &labels)
}
