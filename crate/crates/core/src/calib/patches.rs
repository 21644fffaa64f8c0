//! Patch labelings: uniform grid tiles and SLIC superpixels.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind, Shape};

pub const DEFAULT_SLIC_SEGMENTS: usize = 200;
pub const DEFAULT_SLIC_COMPACTNESS: f64 = 10.0;
pub const DEFAULT_SLIC_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PatchMethod {
    Grid {
        patch_size: usize,
    },
    Slic {
        n_segments: usize,
        compactness: f64,
        iterations: usize,
        /// Recorded for provenance; the clustering itself is deterministic.
        seed: u64,
    },
}

/// Assignment of every pixel to one of `patch_count` non-empty patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchLabeling {
    labels: Vec<usize>,
    height: usize,
    width: usize,
    patch_count: usize,
    pub method: PatchMethod,
}

impl PatchLabeling {
    /// Builds a labeling from per-pixel ids, checking that ids are dense in
    /// `[0, K)` and every patch is non-empty.
    pub fn from_labels(
        height: usize,
        width: usize,
        labels: Vec<usize>,
        method: PatchMethod,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(UqError::shape(format!(
                "{} labels for a {height}x{width} image",
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(UqError::EmptyInput("empty image".into()));
        }
        let patch_count = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; patch_count];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(UqError::invalid(format!("patch {k} is empty")));
        }
        Ok(PatchLabeling {
            labels,
            height,
            width,
            patch_count,
            method,
        })
    }

    pub fn patch_count(&self) -> usize {
        self.patch_count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn label(&self, pixel: usize) -> usize {
        self.labels[pixel]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.patch_count];
        for &l in &self.labels {
            areas[l] += 1;
        }
        areas
    }

    pub fn to_map(&self) -> DenseMap {
        DenseMap::raw(
            Shape::new(self.height, self.width, 1),
            self.labels.iter().map(|&l| l as f64).collect(),
            MapKind::Label,
        )
    }

    /// True when every patch forms a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let (_, sizes) = components(&self.labels, self.height, self.width);
        sizes.len() == self.patch_count
    }
}

/// Row-major tiling into `patch_size x patch_size` squares; edge tiles may be
/// smaller.
pub fn grid_patches(height: usize, width: usize, patch_size: usize) -> Result<PatchLabeling> {
    if patch_size == 0 {
        return Err(UqError::config("patch size must be at least 1"));
    }
    let cols = width.div_ceil(patch_size);
    let labels = (0..height * width)
        .map(|i| (i / width / patch_size) * cols + (i % width) / patch_size)
        .collect();
    PatchLabeling::from_labels(height, width, labels, PatchMethod::Grid { patch_size })
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB in `[0, 1]` to CIE Lab (D65).
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / 0.950456;
    let y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
    let z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / 1.088754;
    let f = |t: f64| {
        if t > 0.008856 {
            t.cbrt()
        } else {
            7.787 * t + 16.0 / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel color features: grayscale intensity is scaled by 100 to match
/// the Lab lightness range; three-channel input is treated as sRGB.
fn color_features(image: &DenseMap) -> Result<Vec<Vec<f64>>> {
    match image.channels() {
        1 => Ok(image.values().iter().map(|&v| vec![100.0 * v]).collect()),
        3 => Ok((0..image.shape().pixels())
            .map(|i| {
                let p = image.pixel(i);
                rgb_to_lab([p[0], p[1], p[2]]).to_vec()
            })
            .collect()),
        c => Err(UqError::shape(format!(
            "superpixels need a 1- or 3-channel image, got {c} channels"
        ))),
    }
}

/// SLIC superpixels: k-means over (color, x, y) with distance
/// `sqrt(d_c^2 + (m d_xy / S)^2)`, `S = sqrt(HW / n_segments)`, local search
/// windows around grid-initialized centers, followed by a connectivity pass
/// that merges components smaller than `S^2 / 4` into their largest
/// neighbor. The final patch count may differ from `n_segments`.
pub fn slic_superpixels(
    image: &DenseMap,
    n_segments: usize,
    compactness: f64,
    iterations: usize,
    seed: u64,
) -> Result<PatchLabeling> {
    let (h, w) = (image.height(), image.width());
    let n = h * w;
    if n_segments == 0 {
        return Err(UqError::config("n_segments must be at least 1"));
    }
    if n_segments > n {
        return Err(UqError::config(format!(
            "n_segments {n_segments} exceeds the pixel count {n}"
        )));
    }
    if !(compactness >= 0.0) || !compactness.is_finite() {
        return Err(UqError::config(format!("compactness {compactness} must be >= 0")));
    }
    let color = color_features(image)?;
    let method = PatchMethod::Slic {
        n_segments,
        compactness,
        iterations,
        seed,
    };
    let step = ((n as f64) / n_segments as f64).sqrt();

    let nx = (((n_segments * w) as f64 / h as f64).sqrt().ceil() as usize).clamp(1, w);
    let ny = n_segments.div_ceil(nx).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);

    struct Center {
        color: Vec<f64>,
        x: f64,
        y: f64,
    }
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (i as f64 + 0.5) * sx;
            let y = (j as f64 + 0.5) * sy;
            let px = (y as usize).min(h - 1) * w + (x as usize).min(w - 1);
            centers.push(Center {
                color: color[px].clone(),
                x,
                y,
            });
        }
    }
    // start from the grid cell each pixel falls in
    let mut labels: Vec<usize> = (0..n)
        .map(|p| {
            let (r, c) = (p / w, p % w);
            let i = ((c as f64 + 0.5) / sx) as usize;
            let j = ((r as f64 + 0.5) / sy) as usize;
            j.min(ny - 1) * nx + i.min(nx - 1)
        })
        .collect();

    let radius = step.max(sx).max(sy).ceil() as isize;
    let spatial = compactness / step;
    let dims = color[0].len();
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, ctr) in centers.iter().enumerate() {
            let (cx, cy) = (ctr.x.floor() as isize, ctr.y.floor() as isize);
            let r0 = (cy - radius).max(0) as usize;
            let r1 = ((cy + radius + 1).max(0) as usize).min(h);
            let c0 = (cx - radius).max(0) as usize;
            let c1 = ((cx + radius + 1).max(0) as usize).min(w);
            for r in r0..r1 {
                for c in c0..c1 {
                    let p = r * w + c;
                    let dc: f64 = color[p]
                        .iter()
                        .zip(&ctr.color)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let dx = c as f64 + 0.5 - ctr.x;
                    let dy = r as f64 + 0.5 - ctr.y;
                    let d = dc + spatial * spatial * (dx * dx + dy * dy);
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }
        let mut sums = vec![(vec![0.0; dims], 0.0, 0.0, 0usize); centers.len()];
        for (p, &k) in labels.iter().enumerate() {
            let s = &mut sums[k];
            for (a, b) in s.0.iter_mut().zip(&color[p]) {
                *a += b;
            }
            s.1 += (p % w) as f64 + 0.5;
            s.2 += (p / w) as f64 + 0.5;
            s.3 += 1;
        }
        for (ctr, (col, x, y, count)) in centers.iter_mut().zip(sums) {
            if count > 0 {
                let m = count as f64;
                ctr.color = col.into_iter().map(|v| v / m).collect();
                ctr.x = x / m;
                ctr.y = y / m;
            }
        }
    }

    let min_size = ((step * step) / 4.0).floor() as usize;
    let merged = enforce_connectivity(&labels, h, w, min_size);
    PatchLabeling::from_labels(h, w, merged, method)
}

/// 4-connected components of equal labels, numbered in raster order of their
/// first pixel. Returns per-pixel component ids and component sizes.
fn components(labels: &[usize], h: usize, w: usize) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == labels[p] {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits labels into connected components, then merges every group smaller
/// than `min_size` into its largest adjacent group (smallest groups first).
/// Output ids are consecutive in raster order.
fn enforce_connectivity(labels: &[usize], h: usize, w: usize, min_size: usize) -> Vec<usize> {
    let (comp, sizes) = components(labels, h, w);
    let k = sizes.len();
    let mut adjacency = vec![BTreeSet::new(); k];
    for p in 0..labels.len() {
        let (r, c) = (p / w, p % w);
        for q in [(r + 1 < h).then(|| p + w), (c + 1 < w).then(|| p + 1)]
            .into_iter()
            .flatten()
        {
            if comp[p] != comp[q] {
                adjacency[comp[p]].insert(comp[q]);
                adjacency[comp[q]].insert(comp[p]);
            }
        }
    }
    let mut parent: Vec<usize> = (0..k).collect();
    let mut size = sizes.clone();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    for c in order {
        let root = find(&mut parent, c);
        if size[root] >= min_size {
            continue;
        }
        let neighbours: BTreeSet<usize> = adjacency[root]
            .iter()
            .map(|&n| find(&mut parent, n))
            .filter(|&n| n != root)
            .collect();
        let Some(&target) = neighbours.iter().max_by_key(|&&n| (size[n], std::cmp::Reverse(n)))
        else {
            continue;
        };
        parent[root] = target;
        size[target] += size[root];
        let moved = std::mem::take(&mut adjacency[root]);
        adjacency[target].extend(moved);
    }
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    comp.iter()
        .map(|&c| {
            let root = find(&mut parent, c);
            if relabel[root] == usize::MAX {
                relabel[root] = next;
                next += 1;
            }
            relabel[root]
        })
        .collect()
}
