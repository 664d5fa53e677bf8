//! Sliding-window occlusion sensitivity with optional ROI gating.
//!
//! Each evaluated window is filled, the model re-run, and the window is
//! credited with `1 - Dice(perturbed, baseline)`. Per-pixel credit is averaged
//! over the windows covering the pixel before min-max normalization.

use serde::{Deserialize, Serialize};

use crate::engine::{
    check_roi, elapsed_ms, ensure_gray, localization_scores, EngineFailure, Fill, RunOptions,
};
use crate::error::{Error, Result};
use crate::exec::{effective_workers, try_parallel_map};
use crate::metrics::{dice, ledger};
use crate::predictor::{check_input, Prediction, Predictor};
use crate::roi::{gate_patches, patch_grid};
use crate::types::{BinaryMask, ExplainReport, ImageU8, Method, PatchGrid, SaliencyMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    pub patch: usize,
    pub stride: usize,
    pub fill: Fill,
    /// Background threshold used to resolve [`Fill::ForegroundMean`].
    pub t_bg: u8,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            patch: 64,
            stride: 32,
            fill: Fill::ForegroundMean,
            t_bg: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OcclusionOutput {
    pub saliency: SaliencyMap,
    pub report: ExplainReport,
    pub baseline: Prediction,
    pub grid: PatchGrid,
    /// Attribution of each evaluated window, in grid order.
    pub attributions: Vec<f64>,
}

/// Copy of `image` with the `patch x patch` window at `(x, y)` set to `fill`.
pub fn occlude(image: &ImageU8, x: usize, y: usize, patch: usize, fill: u8) -> ImageU8 {
    let w = image.width();
    let mut data = image.data().to_vec();
    for row in y..(y + patch).min(image.height()) {
        let start = row * w + x;
        let end = row * w + (x + patch).min(w);
        data[start..end].fill(fill);
    }
    ImageU8::gray(w, image.height(), data).expect("dims follow the image")
}

fn base_report(gated: bool, grid: &PatchGrid, full_total: usize) -> ExplainReport {
    ExplainReport {
        method: Method::Occlusion,
        gated,
        n_patch: grid.retained_count() as u64,
        n_patch_full: full_total as u64,
        rho: if gated { grid.rho() } else { 1.0 },
        wall_clock_ms: 0.0,
        flops: Default::default(),
        dice_vs_baseline: 0.0,
        iou_vs_baseline: 0.0,
        seed: 0,
        warnings: Vec::new(),
    }
}

pub fn run(
    image: &ImageU8,
    predictor: &dyn Predictor,
    roi: Option<&BinaryMask>,
    cfg: &OcclusionConfig,
    opts: &RunOptions,
) -> Result<OcclusionOutput, EngineFailure> {
    let start = web_time::Instant::now();
    ensure_gray(image)?;
    check_roi(image, roi)?;
    let info = predictor.info();
    check_input(&info, image)?;
    let (w, h) = image.dims();

    let full = patch_grid(w, h, cfg.patch, cfg.stride)?;
    let grid = match roi {
        Some(r) => gate_patches(&full, r)?,
        None => full.clone(),
    };
    let mut report = base_report(roi.is_some(), &grid, full.total());

    let baseline = predictor.segment(image).map_err(|error| EngineFailure {
        error,
        partial: Some(Box::new(ExplainReport {
            warnings: vec!["invalid: baseline prediction failed".into()],
            ..report.clone()
        })),
    })?;

    let windows: Vec<(usize, usize)> = grid.retained_positions().collect();
    if windows.is_empty() {
        report.warnings.push("no window intersects the ROI".into());
    }
    let fill = cfg.fill.resolve(image, cfg.t_bg);
    let workers = effective_workers(opts.jobs, info.max_concurrency);
    let attributions = try_parallel_map(windows.len(), workers, |i| -> Result<f64> {
        let (x, y) = windows[i];
        let perturbed = predictor.segment(&occlude(image, x, y, cfg.patch, fill))?;
        Ok(1.0 - dice(&perturbed.mask, &baseline.mask)?)
    })
    .map_err(|aborted| {
        let mut partial = report.clone();
        partial.flops = ledger(
            opts.roi_flops,
            1 + aborted.completed as u64,
            info.flops_per_call,
        );
        partial.wall_clock_ms = elapsed_ms(start);
        partial.warnings.push(format!(
            "invalid: predictor failed after {} of {} windows",
            aborted.completed,
            windows.len()
        ));
        EngineFailure {
            error: aborted.error,
            partial: Some(Box::new(partial)),
        }
    })?;

    // Index-ordered reduction keeps the floating-point sums deterministic.
    let mut acc = vec![0.0f64; w * h];
    let mut coverage = vec![0u32; w * h];
    for (&(x, y), &a) in windows.iter().zip(&attributions) {
        for row in y..y + cfg.patch {
            for col in x..x + cfg.patch {
                acc[row * w + col] += a;
                coverage[row * w + col] += 1;
            }
        }
    }
    let raw = acc
        .iter()
        .zip(&coverage)
        .map(|(&s, &c)| if c > 0 { s / f64::from(c) } else { 0.0 })
        .collect();
    let saliency = SaliencyMap::from_raw(w, h, raw, coverage);

    let (d, j) = localization_scores(&saliency, &baseline)?;
    report.dice_vs_baseline = d;
    report.iou_vs_baseline = j;
    report.flops = ledger(
        opts.roi_flops,
        1 + windows.len() as u64,
        info.flops_per_call,
    );
    report.wall_clock_ms = elapsed_ms(start);

    Ok(OcclusionOutput {
        saliency,
        report,
        baseline,
        grid,
        attributions,
    })
}

/// Rejects configurations the engine cannot honor.
pub fn validate_config(cfg: &OcclusionConfig) -> Result<()> {
    if cfg.patch == 0 || cfg.stride == 0 {
        return Err(Error::InvalidConfig("patch and stride must be >= 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{ConstantPredictor, RegionOracle};

    fn image() -> ImageU8 {
        ImageU8::gray(
            128,
            128,
            (0..128 * 128).map(|i| 50 + (i % 150) as u8).collect(),
        )
        .unwrap()
    }

    fn opts() -> RunOptions {
        RunOptions {
            jobs: 2,
            roi_flops: 0,
        }
    }

    #[test]
    fn occlude_fills_window_only() {
        let img = ImageU8::filled(6, 6, 9).unwrap();
        let out = occlude(&img, 2, 1, 3, 0);
        assert_eq!(out.data().iter().filter(|&&v| v == 0).count(), 9);
        assert_eq!(out.get(2, 1), 0);
        assert_eq!(out.get(5, 1), 9);
    }

    #[test]
    fn window_outside_support_scores_zero() {
        let support = BinaryMask::from_fn(128, 128, |x, y| x < 20 && y < 20);
        let oracle = RegionOracle::new(image(), support, 1.0).unwrap();
        let out = run(
            &image(),
            &oracle,
            None,
            &OcclusionConfig::default(),
            &opts(),
        )
        .unwrap();
        for (&(x, y), &a) in out.grid.positions.iter().zip(&out.attributions) {
            let touches = x < 20 && y < 20;
            assert_eq!(a, if touches { 1.0 } else { 0.0 }, "window ({x}, {y})");
        }
    }

    #[test]
    fn window_covering_support_scores_one() {
        let support = BinaryMask::from_fn(128, 128, |x, y| {
            (40..60).contains(&x) && (40..60).contains(&y)
        });
        let oracle = RegionOracle::new(image(), support, 0.5).unwrap();
        let cfg = OcclusionConfig {
            fill: Fill::Zero,
            ..Default::default()
        };
        let out = run(&image(), &oracle, None, &cfg, &opts()).unwrap();
        let idx = out
            .grid
            .positions
            .iter()
            .position(|&p| p == (32, 32))
            .unwrap();
        assert_eq!(out.attributions[idx], 1.0);
        assert_eq!(out.report.n_patch, 9);
        assert_eq!(out.report.rho, 1.0);
        assert_eq!(out.report.flops.calls, 10);
    }

    #[test]
    fn empty_roi_short_circuits() {
        let oracle = ConstantPredictor {
            mask: BinaryMask::ones(128, 128),
        };
        let roi = BinaryMask::zeros(128, 128);
        let out = run(
            &image(),
            &oracle,
            Some(&roi),
            &OcclusionConfig::default(),
            &opts(),
        )
        .unwrap();
        assert_eq!(out.report.n_patch, 0);
        assert_eq!(out.report.rho, 0.0);
        assert_eq!(out.report.flops.calls, 1);
        assert!(out.saliency.normalized.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roi_size_mismatch_is_rejected() {
        let oracle = ConstantPredictor {
            mask: BinaryMask::ones(128, 128),
        };
        let roi = BinaryMask::zeros(64, 64);
        let err = run(
            &image(),
            &oracle,
            Some(&roi),
            &OcclusionConfig::default(),
            &opts(),
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::DimensionMismatch(_)));
    }

    struct Failing;

    impl Predictor for Failing {
        fn info(&self) -> crate::predictor::PredictorInfo {
            crate::predictor::PredictorInfo {
                name: "failing".into(),
                flops_per_call: 1,
                deterministic: true,
                max_concurrency: 1,
                input_size: None,
            }
        }

        fn segment(&self, image: &ImageU8) -> Result<Prediction> {
            if image.data()[0] == 0 {
                Err(Error::Predictor("boom".into()))
            } else {
                Ok(Prediction::from_mask(BinaryMask::ones(
                    image.width(),
                    image.height(),
                )))
            }
        }
    }

    #[test]
    fn predictor_failure_yields_partial_report() {
        let cfg = OcclusionConfig {
            fill: Fill::Zero,
            ..Default::default()
        };
        let err = run(&image(), &Failing, None, &cfg, &opts()).unwrap_err();
        assert!(matches!(err.error, Error::Predictor(_)));
        let partial = err.partial.expect("partial report");
        assert!(partial.warnings[0].starts_with("invalid:"));
        assert_eq!(partial.flops.calls, 1);
    }
}
