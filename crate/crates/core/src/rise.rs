//! Randomized soft-mask attribution.
//!
//! Masks are Bernoulli cell grids upsampled bilinearly and cropped at a random
//! sub-cell shift. Mask `i` is drawn from ChaCha8 seeded with the run seed on
//! stream `i`, so any mask can be regenerated independently of the others and
//! of the evaluation order. Each run produces a fidelity map (masks weighted by
//! Dice against the baseline) and a relevance map (masks weighted by the ROI
//! score), each normalized independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    check_roi, elapsed_ms, ensure_gray, localization_scores, multiply, EngineFailure, RunOptions,
};
use crate::error::{Error, Result};
use crate::exec::{effective_workers, try_parallel_map};
use crate::metrics::{dice, ledger};
use crate::predictor::{check_input, Prediction, Predictor};
use crate::types::{BinaryMask, ExplainReport, ImageU8, Method, SaliencyMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiseConfig {
    pub n_masks: usize,
    /// Keep probability of each grid cell.
    pub p1: f64,
    /// `(rows, cols)` of the low-resolution grid.
    pub base_grid: (usize, usize),
    pub random_shift: bool,
    pub seed: u64,
}

impl Default for RiseConfig {
    fn default() -> Self {
        Self {
            n_masks: 2000,
            p1: 0.5,
            base_grid: (7, 7),
            random_shift: true,
            seed: 0,
        }
    }
}

impl RiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_masks == 0 {
            return Err(Error::InvalidConfig("n_masks must be >= 1".into()));
        }
        if !(self.p1 > 0.0 && self.p1 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p1 {} outside (0, 1)",
                self.p1
            )));
        }
        if self.base_grid.0 == 0 || self.base_grid.1 == 0 {
            return Err(Error::InvalidConfig(
                "base grid must be at least 1x1".into(),
            ));
        }
        Ok(())
    }
}

/// Soft multiplier in `[0, 1]` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Interpolation taps `(lo, hi, frac)` along one axis for an upsampled
/// coordinate, using half-pixel centers with edge clamping.
fn bilinear_tap(pos: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((pos as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, s - lo as f64)
}

/// Renders a cell grid (`rows x cols`, row-major) into a `width x height`
/// mask: the grid is bilinearly upsampled to `(width + cell_w, height + cell_h)`
/// with `cell = ceil(out / base)`, then cropped at `shift = (dx, dy)`.
pub fn mask_from_cells(
    cells: &[bool],
    base_grid: (usize, usize),
    width: usize,
    height: usize,
    shift: (usize, usize),
) -> SoftMask {
    let (rows, cols) = base_grid;
    debug_assert_eq!(cells.len(), rows * cols);
    let (cell_w, cell_h) = cell_size(base_grid, width, height);
    let (up_w, up_h) = (width + cell_w, height + cell_h);
    let xs: Vec<_> = (0..width)
        .map(|x| bilinear_tap(x + shift.0, cols, up_w))
        .collect();
    let cell = |r: usize, c: usize| if cells[r * cols + c] { 1.0 } else { 0.0 };
    let mut values = Vec::with_capacity(width * height);
    for y in 0..height {
        let (r0, r1, fy) = bilinear_tap(y + shift.1, rows, up_h);
        for &(c0, c1, fx) in &xs {
            let top = cell(r0, c0) * (1.0 - fx) + cell(r0, c1) * fx;
            let bottom = cell(r1, c0) * (1.0 - fx) + cell(r1, c1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    SoftMask {
        width,
        height,
        values,
    }
}

/// `(ceil(width / cols), ceil(height / rows))`.
pub fn cell_size(base_grid: (usize, usize), width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(base_grid.1), height.div_ceil(base_grid.0))
}

/// Generator for mask `index`: ChaCha8 seeded with `seed`, stream `index`.
pub fn mask_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mask `index` of the sequence defined by `cfg`. Cells are drawn row-major,
/// then the shift `(dx, dy)` when enabled.
pub fn sample_mask(cfg: &RiseConfig, index: u64, width: usize, height: usize) -> SoftMask {
    let mut rng = mask_rng(cfg.seed, index);
    let (rows, cols) = cfg.base_grid;
    let p1 = cfg.p1.clamp(0.0, 1.0);
    let cells: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(p1)).collect();
    let shift = if cfg.random_shift {
        let (cw, ch) = cell_size(cfg.base_grid, width, height);
        (rng.random_range(0..cw), rng.random_range(0..ch))
    } else {
        (0, 0)
    };
    mask_from_cells(&cells, cfg.base_grid, width, height, shift)
}

/// Lazily generated masks `0..n_masks`.
pub fn sample_masks(
    cfg: &RiseConfig,
    width: usize,
    height: usize,
) -> impl Iterator<Item = SoftMask> + '_ {
    (0..cfg.n_masks as u64).map(move |i| sample_mask(cfg, i, width, height))
}

/// Forces the multiplier to exactly 1 outside the ROI.
pub fn apply_roi_constraint(mask: &SoftMask, roi: &BinaryMask) -> Result<SoftMask> {
    roi.ensure_dims(mask.width, mask.height)?;
    Ok(SoftMask {
        width: mask.width,
        height: mask.height,
        values: mask
            .values
            .iter()
            .zip(roi.data())
            .map(|(&v, &r)| if r == 0 { 1.0 } else { v })
            .collect(),
    })
}

/// Mean model score over the ROI (whole image without one): the score map
/// when the model reports one, the predicted foreground fraction otherwise.
pub fn relevance_score(pred: &Prediction, roi: Option<&BinaryMask>) -> f64 {
    let in_roi = |i: usize| roi.is_none_or(|r| r.data()[i] != 0);
    let n = pred.mask.data().len();
    let (sum, count) = (0..n)
        .filter(|&i| in_roi(i))
        .fold((0.0, 0usize), |(s, c), i| {
            let v = match &pred.score_map {
                Some(scores) => scores.data()[i],
                None => f64::from(pred.mask.data()[i]),
            };
            (s + v, c + 1)
        });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Weighted-average estimator `S(x) = Σ s_i M_i(x) / Σ M_i(x)`, zero where no
/// mask contributed. Masks and scores are consumed in order.
pub fn aggregate<I>(width: usize, height: usize, weighted: I) -> SaliencyMap
where
    I: IntoIterator<Item = (SoftMask, f64)>,
{
    let n = width * height;
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let mut coverage = vec![0u32; n];
    for (mask, s) in weighted {
        for i in 0..n {
            let m = mask.values[i];
            num[i] += s * m;
            den[i] += m;
            coverage[i] += u32::from(m > 0.0);
        }
    }
    let raw = num
        .iter()
        .zip(&den)
        .map(|(&a, &b)| if b > 0.0 { a / b } else { 0.0 })
        .collect();
    SaliencyMap::from_raw(width, height, raw, coverage)
}

#[derive(Clone, Debug)]
pub struct RiseOutput {
    pub fidelity: SaliencyMap,
    pub relevance: SaliencyMap,
    pub report: ExplainReport,
    pub baseline: Prediction,
    /// `(fidelity, relevance)` score of each mask, in mask order.
    pub scores: Vec<(f64, f64)>,
}

fn roi_mask_for(
    cfg: &RiseConfig,
    index: u64,
    width: usize,
    height: usize,
    roi: Option<&BinaryMask>,
) -> Result<SoftMask> {
    let mask = sample_mask(cfg, index, width, height);
    match roi {
        Some(r) => apply_roi_constraint(&mask, r),
        None => Ok(mask),
    }
}

pub fn run(
    image: &ImageU8,
    predictor: &dyn Predictor,
    roi: Option<&BinaryMask>,
    cfg: &RiseConfig,
    opts: &RunOptions,
) -> Result<RiseOutput, EngineFailure> {
    let start = web_time::Instant::now();
    cfg.validate()?;
    ensure_gray(image)?;
    check_roi(image, roi)?;
    let info = predictor.info();
    check_input(&info, image)?;
    let (w, h) = image.dims();

    let mut report = ExplainReport {
        method: Method::Rise,
        gated: roi.is_some(),
        n_patch: cfg.n_masks as u64,
        n_patch_full: cfg.n_masks as u64,
        rho: 1.0,
        wall_clock_ms: 0.0,
        flops: Default::default(),
        dice_vs_baseline: 0.0,
        iou_vs_baseline: 0.0,
        seed: cfg.seed,
        warnings: Vec::new(),
    };

    let baseline = predictor.segment(image).map_err(|error| EngineFailure {
        error,
        partial: Some(Box::new(ExplainReport {
            warnings: vec!["invalid: baseline prediction failed".into()],
            ..report.clone()
        })),
    })?;

    if roi.is_some_and(BinaryMask::is_empty) {
        report.n_patch = 0;
        report.rho = 0.0;
        report
            .warnings
            .push("ROI is empty; no masks evaluated".into());
        report.flops = ledger(opts.roi_flops, 1, info.flops_per_call);
        report.wall_clock_ms = elapsed_ms(start);
        return Ok(RiseOutput {
            fidelity: SaliencyMap::zeros(w, h),
            relevance: SaliencyMap::zeros(w, h),
            report,
            baseline,
            scores: Vec::new(),
        });
    }

    let workers = effective_workers(opts.jobs, info.max_concurrency);
    let scores = try_parallel_map(cfg.n_masks, workers, |i| -> Result<(f64, f64)> {
        let mask = roi_mask_for(cfg, i as u64, w, h, roi)?;
        let pred = predictor.segment(&multiply(image, &mask.values))?;
        Ok((
            dice(&pred.mask, &baseline.mask)?,
            relevance_score(&pred, roi),
        ))
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
            "invalid: predictor failed after {} of {} masks",
            aborted.completed, cfg.n_masks
        ));
        EngineFailure {
            error: aborted.error,
            partial: Some(Box::new(partial)),
        }
    })?;

    // Masks are regenerated in index order rather than kept in memory.
    let regen = |pick: fn(&(f64, f64)) -> f64| {
        scores.iter().enumerate().map(move |(i, s)| {
            let mask = roi_mask_for(cfg, i as u64, w, h, roi).expect("roi dims checked");
            (mask, pick(s))
        })
    };
    let fidelity = aggregate(w, h, regen(|s| s.0));
    let relevance = aggregate(w, h, regen(|s| s.1));

    let (d, j) = localization_scores(&fidelity, &baseline)?;
    report.dice_vs_baseline = d;
    report.iou_vs_baseline = j;
    report.flops = ledger(opts.roi_flops, 1 + cfg.n_masks as u64, info.flops_per_call);
    report.wall_clock_ms = elapsed_ms(start);

    Ok(RiseOutput {
        fidelity,
        relevance,
        report,
        baseline,
        scores,
    })
}
