//! Reference implementations shared by the oracle suites.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roixai::engine::multiply;
use roixai::metrics::dice;
use roixai::predictor::{Predictor, RegionOracle};
use roixai::superpixel::LabelMap;
use roixai::{BinaryMask, ImageU8};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> ImageU8 {
    ImageU8::gray(w, h, (0..w * h).map(|_| r.random()).collect()).unwrap()
}

/// Blocky image with noise, closer to real content than white noise.
pub fn blocky_image(r: &mut ChaCha8Rng, w: usize, h: usize) -> ImageU8 {
    let levels: Vec<u8> = (0..16).map(|_| r.random()).collect();
    let bw = (w / 4).max(1);
    let bh = (h / 4).max(1);
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let base = levels[((y / bh).min(3) * 4 + (x / bw).min(3)) % 16];
            base.saturating_add(r.random_range(0..12))
        })
        .collect();
    ImageU8::gray(w, h, data).unwrap()
}

/// Textbook graph merge: explicit component ids relabelled in full on every
/// union, no union-find.
pub fn reference_felzenszwalb(
    values: &[f64],
    w: usize,
    h: usize,
    k: f64,
    min_size: usize,
) -> Vec<u32> {
    let n = w * h;
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let a = y * w + x;
            let mut nb = Vec::new();
            if x + 1 < w {
                nb.push(a + 1);
            }
            if y + 1 < h {
                nb.push(a + w);
                if x + 1 < w {
                    nb.push(a + w + 1);
                }
                if x > 0 {
                    nb.push(a + w - 1);
                }
            }
            for b in nb {
                edges.push(((values[a] - values[b]).abs(), a.min(b), a.max(b)));
            }
        }
    }
    edges.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));

    let mut comp: Vec<usize> = (0..n).collect();
    let mut internal = vec![0.0f64; n];
    let size_of = |comp: &[usize], c: usize| comp.iter().filter(|&&v| v == c).count();
    let merge = |comp: &mut Vec<usize>, internal: &mut Vec<f64>, ca: usize, cb: usize, wgt: f64| {
        let sa = comp.iter().filter(|&&v| v == ca).count();
        let sb = comp.iter().filter(|&&v| v == cb).count();
        let (keep, drop) = if sa >= sb { (ca, cb) } else { (cb, ca) };
        for v in comp.iter_mut() {
            if *v == drop {
                *v = keep;
            }
        }
        internal[keep] = internal[ca].max(internal[cb]).max(wgt);
    };

    for &(wgt, a, b) in &edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca == cb {
            continue;
        }
        let ta = internal[ca] + k / size_of(&comp, ca) as f64;
        let tb = internal[cb] + k / size_of(&comp, cb) as f64;
        if wgt <= ta.min(tb) {
            merge(&mut comp, &mut internal, ca, cb, wgt);
        }
    }
    for &(wgt, a, b) in &edges {
        let (ca, cb) = (comp[a], comp[b]);
        if ca != cb && (size_of(&comp, ca) < min_size || size_of(&comp, cb) < min_size) {
            merge(&mut comp, &mut internal, ca, cb, wgt);
        }
    }

    let mut seen: Vec<usize> = Vec::new();
    comp.iter()
        .map(|c| match seen.iter().position(|s| s == c) {
            Some(i) => i as u32 + 1,
            None => {
                seen.push(*c);
                seen.len() as u32
            }
        })
        .collect()
}

/// Direct 2-D Gaussian convolution with edge replication.
pub fn reference_smooth(img: &ImageU8, sigma: f64) -> Vec<f64> {
    let (w, h) = img.dims();
    let r = (3.0 * sigma).ceil() as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut acc, mut norm) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                    let kw = g[(dy + r) as usize] * g[(dx + r) as usize];
                    acc += kw * f64::from(img.get(sx, sy));
                    norm += kw;
                }
            }
            out[y as usize * w + x as usize] = acc / norm;
        }
    }
    out
}

pub fn enumerate_touching(
    w: usize,
    h: usize,
    patch: usize,
    stride: usize,
    roi: &BinaryMask,
) -> (usize, usize) {
    let (mut total, mut hit) = (0, 0);
    let mut y = 0;
    while y + patch <= h {
        let mut x = 0;
        while x + patch <= w {
            total += 1;
            let touches = (y..y + patch).any(|yy| (x..x + patch).any(|xx| roi.get(xx, yy)));
            hit += usize::from(touches);
            x += stride;
        }
        y += stride;
    }
    (hit, total)
}

/// Bilinear weights of the two cells along a 4-pixel axis upsampled from two
/// cells to six pixels (cell size 2), without shift.
pub const TAPS: [[f64; 2]; 4] = [
    [1.0, 0.0],
    [1.0, 0.0],
    [2.0 / 3.0, 1.0 / 3.0],
    [1.0 / 3.0, 2.0 / 3.0],
];

pub fn hand_mask(cells: [bool; 4]) -> Vec<f64> {
    let c = |r: usize, q: usize| f64::from(u8::from(cells[r * 2 + q]));
    let mut out = Vec::new();
    for y in 0..4 {
        for x in 0..4 {
            let mut v = 0.0;
            for r in 0..2 {
                for q in 0..2 {
                    v += TAPS[y][r] * TAPS[x][q] * c(r, q);
                }
            }
            out.push(v);
        }
    }
    out
}

pub fn all_cells() -> Vec<[bool; 4]> {
    (0..16u8)
        .map(|m| [m & 1 != 0, m & 2 != 0, m & 4 != 0, m & 8 != 0])
        .collect()
}

pub fn rise_fixture() -> (ImageU8, RegionOracle) {
    let img = ImageU8::gray(4, 4, (0..16).map(|v| 60 + 10 * v).collect()).unwrap();
    let support = BinaryMask::from_fn(4, 4, |x, y| x >= 2 && y < 2);
    let oracle = RegionOracle::new(img.clone(), support, 0.5).unwrap();
    (img, oracle)
}

pub fn fidelity_score(
    img: &ImageU8,
    oracle: &RegionOracle,
    mask: &[f64],
    baseline: &BinaryMask,
) -> f64 {
    let pred = oracle.segment(&multiply(img, mask)).unwrap();
    dice(&pred.mask, baseline).unwrap()
}

pub fn quadrant_labels(w: usize, h: usize) -> LabelMap {
    LabelMap::new(
        w,
        h,
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                1 + u32::from(x >= w / 2) + 2 * u32::from(y >= h / 2)
            })
            .collect(),
    )
    .unwrap()
}
