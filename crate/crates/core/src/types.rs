//! Shared raster and report types.
//!
//! All rasters are row-major with the origin at the top-left corner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample type stored in an [`ImageGrid`].
pub trait Sample: Copy + PartialOrd + Send + Sync + 'static {
    fn in_range(self) -> bool;
}

impl Sample for u8 {
    fn in_range(self) -> bool {
        true
    }
}

impl Sample for f32 {
    fn in_range(self) -> bool {
        (0.0..=1.0).contains(&self)
    }
}

/// A 1- or 3-channel raster of 8-bit intensities or unit-range floats.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

pub type ImageU8 = ImageGrid<u8>;
pub type ImageF32 = ImageGrid<f32>;

impl<T: Sample> ImageGrid<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        let img = Self {
            width,
            height,
            channels,
            data,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn gray(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, 1, vec![value; width * height])
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "empty image {}x{}",
                self.width, self.height
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::DimensionMismatch(format!(
                "unsupported channel count {}",
                self.channels
            )));
        }
        let expected = self.width * self.height * self.channels;
        if self.data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {}x{}x{}, got {}",
                expected,
                self.width,
                self.height,
                self.channels,
                self.data.len()
            )));
        }
        if let Some(pos) = self.data.iter().position(|v| !v.in_range()) {
            return Err(Error::OutOfRange(format!("sample {pos} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Sample at `(x, y)` of a single-channel image.
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }
}

impl ImageU8 {
    /// Unit-range float copy (`v / 255`).
    pub fn to_unit(&self) -> ImageF32 {
        ImageF32 {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f32::from(v) / 255.0).collect(),
        }
    }
}

impl ImageF32 {
    /// 8-bit copy, `round_half_up(v * 255)`.
    pub fn to_u8(&self) -> ImageU8 {
        ImageU8 {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|&v| round_half_up(f64::from(v) * 255.0).clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }
}

/// Rounds to the nearest integer, ties toward positive infinity.
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Per-pixel `{0, 1}` raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::OutOfRange("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.dims() != (width, height) {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, expected {}x{}",
                self.width, self.height, width, height
            )));
        }
        Ok(())
    }

    /// Pixels where either mask is set.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        other.ensure_dims(self.width, self.height)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a | b)
                .collect(),
        })
    }

    /// Chebyshev dilation: every pixel within `radius` (inclusive) of a set pixel.
    pub fn dilate(&self, radius: usize) -> BinaryMask {
        let (w, h) = self.dims();
        // Separable max filter: rows then columns.
        let mut rows = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                rows[y * w + x] = u8::from((lo..=hi).any(|xx| self.data[y * w + xx] != 0));
            }
        }
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            for x in 0..w {
                out[y * w + x] = u8::from((lo..=hi).any(|yy| rows[yy * w + x] != 0));
            }
        }
        BinaryMask {
            width: w,
            height: h,
            data: out,
        }
    }
}

/// Real-valued raster (importance maps, score maps).
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "float map {}x{} with {} values",
                width,
                height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Min-max normalization to `[0, 1]`. Constant (or empty) input maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / span).collect()
}

/// Attribution raster: the pre-normalization estimate, its min-max image and
/// the number of perturbations that touched each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub coverage: Vec<u32>,
}

impl SaliencyMap {
    pub fn from_raw(width: usize, height: usize, raw: Vec<f64>, coverage: Vec<u32>) -> Self {
        debug_assert_eq!(raw.len(), width * height);
        debug_assert_eq!(coverage.len(), width * height);
        let normalized = min_max_normalize(&raw);
        Self {
            width,
            height,
            raw,
            normalized,
            coverage,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::from_raw(
            width,
            height,
            vec![0.0; width * height],
            vec![0; width * height],
        )
    }

    /// Pixels whose normalized value is at least `threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .normalized
                .iter()
                .map(|&v| u8::from(v >= threshold))
                .collect(),
        }
    }
}

/// Sliding-window layout with per-window retain flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub image_width: usize,
    pub image_height: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub positions: Vec<(usize, usize)>,
    pub retained: Vec<bool>,
}

impl PatchGrid {
    pub fn total(&self) -> usize {
        self.positions.len()
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    /// `retained / total`; zero for an empty grid.
    pub fn rho(&self) -> f64 {
        if self.positions.is_empty() {
            return 0.0;
        }
        self.retained_count() as f64 / self.total() as f64
    }

    pub fn retained_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positions
            .iter()
            .zip(&self.retained)
            .filter(|(_, &r)| r)
            .map(|(&p, _)| p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Occlusion,
    Rise,
    Lime,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Occlusion => "occlusion",
            Method::Rise => "rise",
            Method::Lime => "lime",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "occlusion" => Ok(Method::Occlusion),
            "rise" => Ok(Method::Rise),
            "lime" => Ok(Method::Lime),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

/// Compute-cost bookkeeping: `total = roi + calls * per_call`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsLedger {
    #[serde(rename = "roi")]
    pub roi_flops: u64,
    pub calls: u64,
    #[serde(rename = "per_call")]
    pub flops_per_call: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub method: Method,
    pub gated: bool,
    pub n_patch: u64,
    pub n_patch_full: u64,
    pub rho: f64,
    pub wall_clock_ms: f64,
    pub flops: FlopsLedger,
    pub dice_vs_baseline: f64,
    pub iou_vs_baseline: f64,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_accepts_well_formed_gray() {
        assert!(ImageU8::new(2, 2, 1, vec![0, 1, 2, 3]).is_ok());
    }

    #[test]
    fn validate_rejects_short_buffer() {
        let err = ImageU8::new(2, 2, 1, vec![0, 1, 2]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn validate_rejects_out_of_range_float() {
        let err = ImageF32::new(2, 2, 1, vec![0.0, 0.5, 1.5, 1.0]).unwrap_err();
        assert!(matches!(err, Error::OutOfRange(_)));
    }

    #[test]
    fn validate_rejects_empty_and_bad_channels() {
        assert!(ImageU8::new(0, 2, 1, vec![]).is_err());
        assert!(ImageU8::new(1, 1, 2, vec![0, 0]).is_err());
    }

    #[test]
    fn binary_mask_rejects_non_binary() {
        assert!(BinaryMask::new(2, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn min_max_constant_is_zero() {
        assert_eq!(min_max_normalize(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
        assert_eq!(min_max_normalize(&[1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn unit_conversion_round_trips_u8() {
        let img = ImageU8::gray(4, 1, vec![0, 1, 128, 255]).unwrap();
        assert_eq!(img.to_unit().to_u8(), img);
    }

    #[test]
    fn dilate_single_pixel() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        assert_eq!(m.dilate(1).count(), 9);
        assert_eq!(m.dilate(10).count(), 25);
    }

    #[test]
    fn rho_is_exact_ratio() {
        let grid = PatchGrid {
            image_width: 4,
            image_height: 4,
            patch_size: 2,
            stride: 2,
            positions: vec![(0, 0), (2, 0), (0, 2)],
            retained: vec![true, false, true],
        };
        assert_eq!(grid.rho(), 2.0 / 3.0);
    }

    proptest::proptest! {
        #[test]
        fn min_max_is_idempotent(values in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
            let once = min_max_normalize(&values);
            let twice = min_max_normalize(&once);
            for (a, b) in once.iter().zip(&twice) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
