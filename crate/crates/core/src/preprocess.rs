//! Adaptive contrast enhancement producing standardized grayscale inputs.
//!
//! Pipeline: BT.601 grayscale, area resize, background thresholding,
//! percentile stretch over the foreground, CLAHE, then a selective blend that
//! keeps background pixels untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{round_half_up, BinaryMask, ImageU8};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub t_bg: u8,
    pub pct_low: f64,
    pub pct_high: f64,
    pub clahe_clip: f64,
    /// `(rows, cols)`.
    pub tile_grid: (usize, usize),
    pub target_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            t_bg: 20,
            pct_low: 5.0,
            pct_high: 95.0,
            clahe_clip: 2.0,
            tile_grid: (8, 8),
            target_size: 224,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.pct_low && self.pct_low < self.pct_high && self.pct_high <= 100.0) {
            return Err(Error::InvalidConfig(format!(
                "percentiles must satisfy 0 <= low < high <= 100 (got {}, {})",
                self.pct_low, self.pct_high
            )));
        }
        if !(self.clahe_clip > 0.0) {
            return Err(Error::InvalidConfig("clahe clip must be > 0".into()));
        }
        if self.tile_grid.0 == 0 || self.tile_grid.1 == 0 {
            return Err(Error::InvalidConfig(
                "tile grid must be at least 1x1".into(),
            ));
        }
        if self.target_size == 0 {
            return Err(Error::InvalidConfig("target size must be >= 1".into()));
        }
        Ok(())
    }
}

/// BT.601 luma, `Y = 0.299 R + 0.587 G + 0.114 B`, rounded half up.
/// Single-channel input is returned unchanged.
pub fn to_grayscale(image: &ImageU8) -> Result<ImageU8> {
    match image.channels() {
        1 => Ok(image.clone()),
        3 => {
            let data = image
                .data()
                .chunks_exact(3)
                .map(|px| {
                    let y =
                        299 * u32::from(px[0]) + 587 * u32::from(px[1]) + 114 * u32::from(px[2]);
                    ((y + 500) / 1000) as u8
                })
                .collect();
            ImageU8::gray(image.width(), image.height(), data)
        }
        c => Err(Error::DimensionMismatch(format!(
            "grayscale conversion needs 3 channels, got {c}"
        ))),
    }
}

/// Source pixels overlapping each output cell along one axis, with overlap
/// lengths measured in units of `1 / dst` source pixels.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|o| {
            let start = o * src;
            let end = (o + 1) * src;
            let first = start / dst;
            let last = (end - 1) / dst;
            (first..=last)
                .map(|s| {
                    let lo = start.max(s * dst);
                    let hi = end.min((s + 1) * dst);
                    (s, (hi - lo) as u64)
                })
                .collect()
        })
        .collect()
}

/// Area (box-average) resampling to `width x height`. Each output pixel is the
/// exact overlap-weighted mean of its source box, rounded half up.
pub fn resize_area_to(image: &ImageU8, width: usize, height: usize) -> Result<ImageU8> {
    image.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("resize target must be >= 1".into()));
    }
    if image.dims() == (width, height) {
        return Ok(image.clone());
    }
    let (sw, sh) = image.dims();
    let ch = image.channels();
    let wx = area_weights(sw, width);
    let wy = area_weights(sh, height);
    // Box area in the same units as the weight products.
    let denom = (sw * sh) as u64;
    let src = image.data();
    let mut out = Vec::with_capacity(width * height * ch);
    for row in &wy {
        for col in &wx {
            for c in 0..ch {
                let mut acc = 0u64;
                for &(sy, ay) in row {
                    for &(sx, ax) in col {
                        acc += u64::from(src[(sy * sw + sx) * ch + c]) * ay * ax;
                    }
                }
                out.push(((2 * acc + denom) / (2 * denom)) as u8);
            }
        }
    }
    ImageU8::new(width, height, ch, out)
}

/// Square area resize to `target x target`.
pub fn resize_area(image: &ImageU8, target: usize) -> Result<ImageU8> {
    resize_area_to(image, target, target)
}

/// `1` where `I < t_bg` (background), else `0`.
pub fn background_mask(image: &ImageU8, t_bg: u8) -> BinaryMask {
    let data = image.data().iter().map(|&v| u8::from(v < t_bg)).collect();
    BinaryMask::new(image.width(), image.height(), data).expect("mask dims follow the image")
}

/// Nearest-rank percentile (`rank = ceil(p / 100 * n)`, clamped to `[1, n]`)
/// over a 256-bin histogram.
fn nearest_rank(hist: &[u64; 256], n: u64, pct: f64) -> u8 {
    let rank = ((pct / 100.0 * n as f64).ceil() as u64).clamp(1, n);
    let mut seen = 0u64;
    for (v, &count) in hist.iter().enumerate() {
        seen += count;
        if seen >= rank {
            return v as u8;
        }
    }
    255
}

/// Nearest-rank percentiles of the foreground intensities (`mask == 0`).
pub fn percentile_bounds(
    image: &ImageU8,
    mask: &BinaryMask,
    pct_low: f64,
    pct_high: f64,
) -> Result<(u8, u8)> {
    mask.ensure_dims(image.width(), image.height())?;
    let mut hist = [0u64; 256];
    let mut n = 0u64;
    for (&v, &m) in image.data().iter().zip(mask.data()) {
        if m == 0 {
            hist[v as usize] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoForeground);
    }
    Ok((
        nearest_rank(&hist, n, pct_low),
        nearest_rank(&hist, n, pct_high),
    ))
}

/// Piecewise-linear stretch mapping `p_low -> 0` and `p_high -> 255`.
///
/// When the bounds coincide, values at or below the bound map to 0 and values
/// above it map to 255.
pub fn stretch_value(v: u8, p_low: u8, p_high: u8) -> u8 {
    if v <= p_low {
        0
    } else if v >= p_high {
        255
    } else {
        let num = 255 * u32::from(v - p_low);
        let den = u32::from(p_high - p_low);
        ((2 * num + den) / (2 * den)) as u8
    }
}

pub fn linear_stretch(image: &ImageU8, p_low: u8, p_high: u8) -> Result<ImageU8> {
    if p_low > p_high {
        return Err(Error::InvalidConfig(format!(
            "stretch bounds reversed ({p_low} > {p_high})"
        )));
    }
    let lut: Vec<u8> = (0..=255u8)
        .map(|v| stretch_value(v, p_low, p_high))
        .collect();
    let data = image.data().iter().map(|&v| lut[v as usize]).collect();
    ImageU8::new(image.width(), image.height(), image.channels(), data)
}

/// Per-tile clip limit `clip * n_pixels / 256`.
pub fn clip_limit(clip: f64, n_pixels: usize) -> f64 {
    clip * n_pixels as f64 / 256.0
}

/// Clips every bin at `limit` and spreads the total excess uniformly over all
/// 256 bins (single pass).
pub fn clip_histogram(hist: &[u32; 256], limit: f64) -> [f64; 256] {
    let excess: f64 = hist.iter().map(|&h| (f64::from(h) - limit).max(0.0)).sum();
    let share = excess / 256.0;
    let mut out = [0.0; 256];
    for (o, &h) in out.iter_mut().zip(hist) {
        *o = f64::from(h).min(limit) + share;
    }
    out
}

/// Equalization map of one tile from its clipped histogram.
fn tile_lut(clipped: &[f64; 256]) -> [f64; 256] {
    let mut cdf = [0.0; 256];
    let mut acc = 0.0;
    for (c, &h) in cdf.iter_mut().zip(clipped) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().fold(f64::INFINITY, f64::min);
    let cdf_max = cdf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = cdf_max - cdf_min;
    let mut lut = [0.0; 256];
    for (b, l) in lut.iter_mut().enumerate() {
        *l = if span > 0.0 {
            (cdf[b] - cdf_min) / span * 255.0
        } else {
            b as f64
        };
    }
    lut
}

/// Half-open bounds of `n` near-equal partitions of `len`.
fn partition(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

/// Interpolation neighbors and weight of the far neighbor for a coordinate,
/// given tile centers along one axis. Edge tiles clamp.
fn neighbors(pos: f64, centers: &[f64]) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if pos <= centers[0] {
        return (0, 0, 0.0);
    }
    if pos >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.iter().rposition(|&c| c <= pos).unwrap_or(0);
    let j = i + 1;
    (i, j, (pos - centers[i]) / (centers[j] - centers[i]))
}

/// Per-tile histograms of a grayscale image under a `(rows, cols)` tiling.
pub fn tile_histograms(image: &ImageU8, tile_grid: (usize, usize)) -> Result<Vec<[u32; 256]>> {
    let (w, h) = image.dims();
    let (rows, cols) = tile_grid;
    if rows == 0 || cols == 0 || rows > h || cols > w {
        return Err(Error::TileTooLarge {
            rows,
            cols,
            width: w,
            height: h,
        });
    }
    let ys = partition(h, rows);
    let xs = partition(w, cols);
    let data = image.data();
    let mut out = Vec::with_capacity(rows * cols);
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for &v in &data[y * w + x0..y * w + x1] {
                    hist[v as usize] += 1;
                }
            }
            out.push(hist);
        }
    }
    Ok(out)
}

/// Contrast-limited adaptive histogram equalization with bilinear
/// interpolation between tile mappings.
pub fn clahe(image: &ImageU8, clip: f64, tile_grid: (usize, usize)) -> Result<ImageU8> {
    if !image.is_gray() {
        return Err(Error::DimensionMismatch(
            "clahe needs a grayscale image".into(),
        ));
    }
    if !(clip > 0.0) {
        return Err(Error::InvalidConfig("clip must be > 0".into()));
    }
    let (w, h) = image.dims();
    let hists = tile_histograms(image, tile_grid)?;
    let (rows, cols) = tile_grid;
    let ys = partition(h, rows);
    let xs = partition(w, cols);

    let luts: Vec<[f64; 256]> = hists
        .iter()
        .enumerate()
        .map(|(i, hist)| {
            let (y0, y1) = ys[i / cols];
            let (x0, x1) = xs[i % cols];
            let limit = clip_limit(clip, (y1 - y0) * (x1 - x0));
            tile_lut(&clip_histogram(hist, limit))
        })
        .collect();

    let cy: Vec<f64> = ys.iter().map(|&(a, b)| (a + b - 1) as f64 / 2.0).collect();
    let cx: Vec<f64> = xs.iter().map(|&(a, b)| (a + b - 1) as f64 / 2.0).collect();
    let col_nb: Vec<_> = (0..w).map(|x| neighbors(x as f64, &cx)).collect();

    let src = image.data();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (r0, r1, fy) = neighbors(y as f64, &cy);
        for (x, &(c0, c1, fx)) in col_nb.iter().enumerate() {
            let v = src[y * w + x] as usize;
            let top = luts[r0 * cols + c0][v] * (1.0 - fx) + luts[r0 * cols + c1][v] * fx;
            let bottom = luts[r1 * cols + c0][v] * (1.0 - fx) + luts[r1 * cols + c1][v] * fx;
            let val = top * (1.0 - fy) + bottom * fy;
            out.push(round_half_up(val).clamp(0.0, 255.0) as u8);
        }
    }
    ImageU8::gray(w, h, out)
}

/// Replaces foreground pixels (`mask == 0`) with `enhanced`, keeping `original`
/// elsewhere.
pub fn selective_blend(
    original: &ImageU8,
    enhanced: &ImageU8,
    mask: &BinaryMask,
) -> Result<ImageU8> {
    if original.dims() != enhanced.dims() {
        return Err(Error::DimensionMismatch(
            "blend inputs differ in size".into(),
        ));
    }
    mask.ensure_dims(original.width(), original.height())?;
    let data = original
        .data()
        .iter()
        .zip(enhanced.data())
        .zip(mask.data())
        .map(|((&o, &e), &m)| if m == 0 { e } else { o })
        .collect();
    ImageU8::gray(original.width(), original.height(), data)
}

/// Full enhancement pipeline.
pub fn enhance(image: &ImageU8, cfg: &PreprocessConfig) -> Result<ImageU8> {
    cfg.validate()?;
    let gray = to_grayscale(image)?;
    let resized = resize_area(&gray, cfg.target_size)?;
    let mask = background_mask(&resized, cfg.t_bg);
    let (p_low, p_high) = match percentile_bounds(&resized, &mask, cfg.pct_low, cfg.pct_high) {
        Ok(bounds) => bounds,
        Err(Error::NoForeground) => return Ok(resized),
        Err(e) => return Err(e),
    };
    let stretched = linear_stretch(&resized, p_low, p_high)?;
    let equalized = clahe(&stretched, cfg.clahe_clip, cfg.tile_grid)?;
    let out = selective_blend(&resized, &equalized, &mask)?;
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(r: u8, g: u8, b: u8) -> ImageU8 {
        ImageU8::new(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn grayscale_reference_values() {
        assert_eq!(to_grayscale(&rgb(255, 255, 255)).unwrap().data(), &[255]);
        assert_eq!(to_grayscale(&rgb(0, 0, 0)).unwrap().data(), &[0]);
        // 0.299 * 255 = 76.245
        assert_eq!(to_grayscale(&rgb(255, 0, 0)).unwrap().data(), &[76]);
    }

    #[test]
    fn resize_identity_and_box_mean() {
        let img = ImageU8::gray(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(resize_area_to(&img, 3, 2).unwrap(), img);

        // mean(0, 0, 255, 255) = 127.5
        let img = ImageU8::gray(2, 2, vec![0, 0, 255, 255]).unwrap();
        assert_eq!(resize_area(&img, 1).unwrap().data(), &[128]);

        let img = ImageU8::filled(4, 4, 10).unwrap();
        assert_eq!(resize_area(&img, 2).unwrap().data(), &[10; 4]);
    }

    #[test]
    fn resize_fractional_boxes() {
        // 3 -> 2 columns: boxes [0, 1.5) and [1.5, 3).
        let img = ImageU8::gray(3, 1, vec![0, 90, 180]).unwrap();
        let out = resize_area_to(&img, 2, 1).unwrap();
        // (0 + 0.5 * 90) / 1.5 = 30; (0.5 * 90 + 180) / 1.5 = 150
        assert_eq!(out.data(), &[30, 150]);
    }

    #[test]
    fn background_mask_is_strict_less() {
        let img = ImageU8::gray(3, 1, vec![10, 20, 30]).unwrap();
        assert_eq!(background_mask(&img, 20).data(), &[1, 0, 0]);
        assert_eq!(
            background_mask(&ImageU8::filled(2, 2, 0).unwrap(), 20).count(),
            4
        );
        assert_eq!(
            background_mask(&ImageU8::filled(2, 2, 255).unwrap(), 20).count(),
            0
        );
    }

    /// Sorted-list nearest-rank oracle.
    fn nearest_rank_oracle(values: &[u8], pct: f64) -> u8 {
        let mut v = values.to_vec();
        v.sort_unstable();
        let rank = ((pct / 100.0 * v.len() as f64).ceil() as usize).clamp(1, v.len());
        v[rank - 1]
    }

    #[test]
    fn percentiles_match_nearest_rank() {
        let values: Vec<u8> = (1..=100).collect();
        let img = ImageU8::gray(100, 1, values.clone()).unwrap();
        let mask = BinaryMask::zeros(100, 1);
        assert_eq!(percentile_bounds(&img, &mask, 5.0, 95.0).unwrap(), (5, 95));
        assert_eq!(nearest_rank_oracle(&values, 5.0), 5);

        let img = ImageU8::filled(3, 3, 42).unwrap();
        let mask = BinaryMask::zeros(3, 3);
        assert_eq!(percentile_bounds(&img, &mask, 5.0, 95.0).unwrap(), (42, 42));

        let mask = BinaryMask::ones(3, 3);
        assert!(matches!(
            percentile_bounds(&img, &mask, 5.0, 95.0),
            Err(Error::NoForeground)
        ));
    }

    #[test]
    fn percentiles_ignore_background() {
        let img = ImageU8::gray(4, 1, vec![0, 100, 200, 5]).unwrap();
        let mask = background_mask(&img, 20);
        assert_eq!(
            percentile_bounds(&img, &mask, 0.0, 100.0).unwrap(),
            (100, 200)
        );
    }

    #[test]
    fn stretch_examples() {
        assert_eq!(stretch_value(10, 10, 210), 0);
        assert_eq!(stretch_value(210, 10, 210), 255);
        // 255 * 100 / 200 = 127.5
        assert_eq!(stretch_value(110, 10, 210), 128);
        assert_eq!(stretch_value(5, 10, 210), 0);
        // Degenerate bounds.
        assert_eq!(stretch_value(50, 50, 50), 0);
        assert_eq!(stretch_value(51, 50, 50), 255);
        assert!(linear_stretch(&ImageU8::filled(1, 1, 0).unwrap(), 9, 3).is_err());
    }

    #[test]
    fn clip_limit_for_28px_tile() {
        assert_eq!(clip_limit(2.0, 28 * 28), 6.125);
    }

    #[test]
    fn clip_conserves_mass() {
        let mut hist = [0u32; 256];
        hist[3] = 700;
        hist[200] = 84;
        let clipped = clip_histogram(&hist, 6.125);
        assert!((clipped.iter().sum::<f64>() - 784.0).abs() < 1e-9);
    }

    #[test]
    fn clahe_constant_is_constant() {
        let img = ImageU8::filled(64, 48, 77).unwrap();
        let out = clahe(&img, 2.0, (8, 8)).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));
    }

    #[test]
    fn clahe_rejects_oversized_grid() {
        let img = ImageU8::filled(4, 4, 1).unwrap();
        assert!(matches!(
            clahe(&img, 2.0, (8, 8)),
            Err(Error::TileTooLarge { .. })
        ));
    }

    #[test]
    fn clahe_without_clipping_single_tile_is_global_equalization() {
        // Huge clip: plain histogram equalization on one tile.
        let img = ImageU8::gray(4, 1, vec![10, 20, 30, 40]).unwrap();
        let out = clahe(&img, 1e6, (1, 1)).unwrap();
        // CDF over bins: min = 0 (bins below 10), max = 4.
        assert_eq!(out.data(), &[64, 128, 191, 255]);
    }

    #[test]
    fn enhance_all_background_returns_resized() {
        let img = ImageU8::filled(448, 448, 3).unwrap();
        let out = enhance(&img, &PreprocessConfig::default()).unwrap();
        assert_eq!(out, ImageU8::filled(224, 224, 3).unwrap());
    }

    #[test]
    fn enhance_constant_foreground_is_constant() {
        let img = ImageU8::filled(224, 224, 120).unwrap();
        let out = enhance(&img, &PreprocessConfig::default()).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));
    }

    #[test]
    fn enhance_rejects_bad_config() {
        let img = ImageU8::filled(8, 8, 120).unwrap();
        let cfg = PreprocessConfig {
            pct_low: 90.0,
            pct_high: 10.0,
            ..Default::default()
        };
        assert!(matches!(enhance(&img, &cfg), Err(Error::InvalidConfig(_))));
    }
}
