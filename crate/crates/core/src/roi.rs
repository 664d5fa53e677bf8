//! ROI derivation from importance maps and patch gating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::types::{min_max_normalize, BinaryMask, FloatMap, PatchGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub gauss_sigma: f64,
    pub threshold: f64,
    /// Keep this fraction of the most important pixels instead of thresholding.
    pub top_fraction: Option<f64>,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            gauss_sigma: 2.0,
            threshold: 0.5,
            top_fraction: None,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if let Some(f) = self.top_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "top fraction {f} outside (0, 1]"
                )));
            }
        }
        if !(self.gauss_sigma >= 0.0) {
            return Err(Error::InvalidConfig("gauss sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Normalize, smooth and binarize an importance map.
///
/// In threshold mode pixels with smoothed value `>= threshold` are selected;
/// in top-fraction mode exactly `ceil(fraction * N)` pixels are, ties going to
/// the lower row-major index.
pub fn binarize_importance(map: &FloatMap, cfg: &RoiConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    if map.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange(
            "importance map has non-finite values".into(),
        ));
    }
    let (w, h) = map.dims();
    let normalized = min_max_normalize(map.data());
    let smoothed = gaussian_blur(&normalized, w, h, cfg.gauss_sigma);

    match cfg.top_fraction {
        Some(fraction) => {
            let n = smoothed.len();
            let keep = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| smoothed[b].total_cmp(&smoothed[a]).then(a.cmp(&b)));
            let mut data = vec![0u8; n];
            for &i in &order[..keep] {
                data[i] = 1;
            }
            BinaryMask::new(w, h, data)
        }
        None => {
            let lo = map.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = map.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Err(Error::DegenerateImportance);
            }
            let data = smoothed
                .iter()
                .map(|&v| u8::from(v >= cfg.threshold))
                .collect();
            BinaryMask::new(w, h, data)
        }
    }
}

/// Nearest-neighbor resampling (`src = floor(dst * src_len / dst_len)`).
pub fn resize_mask_nn(mask: &BinaryMask, width: usize, height: usize) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("mask target size must be >= 1".into()));
    }
    let (sw, sh) = mask.dims();
    Ok(BinaryMask::from_fn(width, height, |x, y| {
        mask.get(x * sw / width, y * sh / height)
    }))
}

/// All `patch x patch` windows at multiples of `stride` that fit the image,
/// row by row. Every window starts out retained.
pub fn patch_grid(width: usize, height: usize, patch: usize, stride: usize) -> Result<PatchGrid> {
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidConfig("patch and stride must be >= 1".into()));
    }
    if patch > width || patch > height {
        return Err(Error::PatchTooLarge {
            patch,
            width,
            height,
        });
    }
    let mut positions = Vec::new();
    for y in (0..=height - patch).step_by(stride) {
        for x in (0..=width - patch).step_by(stride) {
            positions.push((x, y));
        }
    }
    let retained = vec![true; positions.len()];
    Ok(PatchGrid {
        image_width: width,
        image_height: height,
        patch_size: patch,
        stride,
        positions,
        retained,
    })
}

/// Summed-area table with a zero border row and column.
fn integral(mask: &BinaryMask) -> Vec<u64> {
    let (w, h) = mask.dims();
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += u64::from(mask.data()[y * w + x]);
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    sat
}

/// Retains exactly the windows that share at least one pixel with `roi`.
pub fn gate_patches(grid: &PatchGrid, roi: &BinaryMask) -> Result<PatchGrid> {
    roi.ensure_dims(grid.image_width, grid.image_height)?;
    let sat = integral(roi);
    let stride = grid.image_width + 1;
    let p = grid.patch_size;
    let retained = grid
        .positions
        .iter()
        .map(|&(x, y)| {
            let sum = sat[(y + p) * stride + x + p] + sat[y * stride + x]
                - sat[y * stride + x + p]
                - sat[(y + p) * stride + x];
            sum > 0
        })
        .collect();
    Ok(PatchGrid {
        retained,
        ..grid.clone()
    })
}
