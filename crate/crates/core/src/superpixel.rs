//! Graph-based superpixels (Felzenszwalb-Huttenlocher) and ROI restriction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::types::{BinaryMask, ImageU8};

/// Row-major segment labels. After ROI restriction, `0` marks excluded pixels
/// and segments are numbered `1..=K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "label map {}x{} with {} labels",
                width,
                height,
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct positive labels.
    pub fn segment_count(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Pixel count per label, indexed by label value.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.max_label() as usize + 1];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FelzConfig {
    pub scale: f64,
    pub sigma: f64,
    pub min_size: usize,
}

impl Default for FelzConfig {
    fn default() -> Self {
        Self {
            scale: 100.0,
            sigma: 0.5,
            min_size: 50,
        }
    }
}

impl FelzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !(self.sigma >= 0.0) || self.min_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "felzenszwalb needs scale > 0, sigma >= 0, min_size >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    // Largest MST edge inside each component.
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize, weight: f64) {
        let (big, small) = if self.size[a] >= self.size[b] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.internal[big] = self.internal[big].max(self.internal[small]).max(weight);
    }
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    weight: f64,
    a: usize,
    b: usize,
}

/// 8-connected grid edges, `a < b`, sorted by `(weight, a, b)`.
fn grid_edges(values: &[f64], width: usize, height: usize) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(width * height * 4);
    for y in 0..height {
        for x in 0..width {
            let a = y * width + x;
            let mut push = |b: usize| {
                edges.push(Edge {
                    weight: (values[a] - values[b]).abs(),
                    a,
                    b,
                })
            };
            if x + 1 < width {
                push(a + 1);
            }
            if y + 1 < height {
                push(a + width);
                if x + 1 < width {
                    push(a + width + 1);
                }
                if x > 0 {
                    push(a + width - 1);
                }
            }
        }
    }
    edges.sort_by(|p, q| {
        p.weight
            .total_cmp(&q.weight)
            .then(p.a.cmp(&q.a))
            .then(p.b.cmp(&q.b))
    });
    edges
}

/// Renumbers arbitrary component keys to `1..=K` in row-major first-appearance
/// order.
fn sequential_labels(keys: impl Iterator<Item = usize>) -> Vec<u32> {
    let mut map: HashMap<usize, u32> = HashMap::new();
    keys.map(|k| {
        let next = map.len() as u32 + 1;
        *map.entry(k).or_insert(next)
    })
    .collect()
}

/// Graph-based segmentation of a grayscale image. Labels run `1..=K`.
///
/// Intensities stay on the 0-255 scale, so `scale` acts directly as the
/// threshold constant `k` in `tau(C) = k / |C|`.
pub fn felzenszwalb(image: &ImageU8, cfg: &FelzConfig) -> Result<LabelMap> {
    cfg.validate()?;
    if !image.is_gray() {
        return Err(Error::DimensionMismatch(
            "felzenszwalb needs a grayscale image".into(),
        ));
    }
    let (w, h) = image.dims();
    let raw: Vec<f64> = image.data().iter().map(|&v| f64::from(v)).collect();
    let smoothed = gaussian_blur(&raw, w, h, cfg.sigma);
    let edges = grid_edges(&smoothed, w, h);

    let mut sets = DisjointSet::new(w * h);
    for e in &edges {
        let ra = sets.find(e.a);
        let rb = sets.find(e.b);
        if ra == rb {
            continue;
        }
        let ta = sets.internal[ra] + cfg.scale / sets.size[ra] as f64;
        let tb = sets.internal[rb] + cfg.scale / sets.size[rb] as f64;
        if e.weight <= ta.min(tb) {
            sets.union(ra, rb, e.weight);
        }
    }
    // Absorb undersized components through their cheapest boundary edge.
    for e in &edges {
        let ra = sets.find(e.a);
        let rb = sets.find(e.b);
        if ra != rb && (sets.size[ra] < cfg.min_size || sets.size[rb] < cfg.min_size) {
            sets.union(ra, rb, e.weight);
        }
    }

    let labels = sequential_labels((0..w * h).map(|i| sets.find(i)));
    LabelMap::new(w, h, labels)
}

/// Zeroes labels outside `roi` and renumbers the survivors `1..=K` in
/// row-major first-appearance order.
///
/// Segments lying fully inside the ROI are kept whole. Segments cut by the
/// ROI boundary are split into their 4-connected pieces.
pub fn restrict_to_roi(labels: &LabelMap, roi: &BinaryMask) -> Result<LabelMap> {
    roi.ensure_dims(labels.width, labels.height)?;
    let (w, h) = (labels.width, labels.height);
    let n_labels = labels.max_label() as usize + 1;
    let mut inside = vec![0usize; n_labels];
    let mut outside = vec![0usize; n_labels];
    for (&l, &r) in labels.labels.iter().zip(roi.data()) {
        if r != 0 {
            inside[l as usize] += 1;
        } else {
            outside[l as usize] += 1;
        }
    }

    // Piece key per ROI pixel: whole segments keyed by label, cut segments by
    // the seed pixel of their 4-connected piece (offset past the label range).
    const NONE: usize = usize::MAX;
    let mut key = vec![NONE; w * h];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if roi.data()[start] == 0 || key[start] != NONE {
            continue;
        }
        let l = labels.labels[start];
        if outside[l as usize] == 0 {
            key[start] = l as usize;
            continue;
        }
        let piece = n_labels + start;
        key[start] = piece;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if key[q] == NONE && roi.data()[q] != 0 && labels.labels[q] == l {
                    key[q] = piece;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
    }

    let mut map: HashMap<usize, u32> = HashMap::new();
    let out = key
        .iter()
        .map(|&k| {
            if k == NONE {
                0
            } else {
                let next = map.len() as u32 + 1;
                *map.entry(k).or_insert(next)
            }
        })
        .collect();
    LabelMap::new(w, h, out)
}

/// Every pixel labelled `1`, as a trivial single-segment partition.
pub fn single_segment(width: usize, height: usize) -> LabelMap {
    LabelMap {
        width,
        height,
        labels: vec![1; width * height],
    }
}
