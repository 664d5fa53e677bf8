//! Pieces shared by the perturbation engines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::default_jobs;
use crate::metrics;
use crate::predictor::Prediction;
use crate::types::{round_half_up, BinaryMask, ExplainReport, ImageU8, SaliencyMap};

/// Replacement intensity for perturbed pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    Zero,
    /// Mean intensity of pixels at or above the background threshold.
    ForegroundMean,
    Constant(u8),
}

impl Fill {
    pub fn resolve(self, image: &ImageU8, t_bg: u8) -> u8 {
        match self {
            Fill::Zero => 0,
            Fill::Constant(v) => v,
            Fill::ForegroundMean => {
                let (sum, n) = image
                    .data()
                    .iter()
                    .filter(|&&v| v >= t_bg)
                    .fold((0u64, 0u64), |(s, n), &v| (s + u64::from(v), n + 1));
                let (sum, n) = if n == 0 {
                    (
                        image.data().iter().map(|&v| u64::from(v)).sum(),
                        image.data().len() as u64,
                    )
                } else {
                    (sum, n)
                };
                ((2 * sum + n) / (2 * n)) as u8
            }
        }
    }
}

impl std::str::FromStr for Fill {
    type Err = Error;

    /// `zero`, `mean` or an intensity `0..=255`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Fill::Zero),
            "mean" | "foreground_mean" => Ok(Fill::ForegroundMean),
            other => other
                .parse::<u8>()
                .map(Fill::Constant)
                .map_err(|_| Error::InvalidConfig(format!("bad fill '{other}'"))),
        }
    }
}

/// Execution settings common to every engine run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; further capped by the predictor's `max_concurrency`.
    pub jobs: usize,
    /// Cost of deriving the ROI, charged to the FLOPs ledger.
    pub roi_flops: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: default_jobs(),
            roi_flops: 0,
        }
    }
}

/// Engine error carrying the report accumulated up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct EngineFailure {
    pub error: Error,
    /// Present when the failure happened after work started; its warnings
    /// begin with `invalid:`.
    pub partial: Option<Box<ExplainReport>>,
}

impl From<Error> for EngineFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

/// Dice and IoU of the saliency map thresholded at 0.5 against the baseline
/// segmentation.
pub fn localization_scores(map: &SaliencyMap, baseline: &Prediction) -> Result<(f64, f64)> {
    let hot = map.threshold(0.5);
    Ok((
        metrics::dice(&hot, &baseline.mask)?,
        metrics::iou(&hot, &baseline.mask)?,
    ))
}

pub(crate) fn ensure_gray(image: &ImageU8) -> Result<()> {
    image.validate()?;
    if !image.is_gray() {
        return Err(Error::DimensionMismatch(
            "engines operate on grayscale images".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_roi(image: &ImageU8, roi: Option<&BinaryMask>) -> Result<()> {
    if let Some(roi) = roi {
        roi.ensure_dims(image.width(), image.height())?;
    }
    Ok(())
}

/// Elementwise product of unit-range intensities with a soft mask, rounded back
/// to 8 bits.
pub fn multiply(image: &ImageU8, mask: &[f64]) -> ImageU8 {
    let data = image
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| round_half_up(f64::from(v) / 255.0 * m * 255.0).clamp(0.0, 255.0) as u8)
        .collect();
    ImageU8::gray(image.width(), image.height(), data).expect("dims follow the image")
}

pub(crate) fn elapsed_ms(start: web_time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_resolution() {
        let img = ImageU8::gray(4, 1, vec![0, 10, 100, 201]).unwrap();
        assert_eq!(Fill::Zero.resolve(&img, 20), 0);
        assert_eq!(Fill::Constant(7).resolve(&img, 20), 7);
        // (100 + 201) / 2 = 150.5
        assert_eq!(Fill::ForegroundMean.resolve(&img, 20), 151);
        let dark = ImageU8::gray(2, 1, vec![1, 4]).unwrap();
        assert_eq!(Fill::ForegroundMean.resolve(&dark, 20), 3);
    }

    #[test]
    fn fill_parsing() {
        assert_eq!("zero".parse::<Fill>().unwrap(), Fill::Zero);
        assert_eq!("mean".parse::<Fill>().unwrap(), Fill::ForegroundMean);
        assert_eq!("42".parse::<Fill>().unwrap(), Fill::Constant(42));
        assert!("300".parse::<Fill>().is_err());
    }

    #[test]
    fn multiply_by_one_is_identity() {
        let img = ImageU8::gray(256, 1, (0..=255).collect()).unwrap();
        assert_eq!(multiply(&img, &[1.0; 256]), img);
        assert!(multiply(&img, &[0.0; 256]).data().iter().all(|&v| v == 0));
    }
}
