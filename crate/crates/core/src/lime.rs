//! Superpixel-ablation surrogate explanations over several segmentation scales.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    check_roi, elapsed_ms, ensure_gray, localization_scores, EngineFailure, Fill, RunOptions,
};
use crate::error::{Error, Result};
use crate::exec::{effective_workers, try_parallel_map};
use crate::metrics::{dice, ledger};
use crate::predictor::{check_input, Prediction, Predictor};
use crate::rise::relevance_score;
use crate::superpixel::{felzenszwalb, restrict_to_roi, FelzConfig, LabelMap};
use crate::types::{min_max_normalize, BinaryMask, ExplainReport, ImageU8, Method, SaliencyMap};

/// How an ablated prediction is scored against the baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimeScore {
    /// Dice between the ablated and the baseline masks.
    #[default]
    Dice,
    /// Mean model score (or foreground fraction) over the ROI.
    MeanScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Felzenszwalb `scale` of each partition.
    pub scales: Vec<f64>,
    pub sigma: f64,
    pub min_size: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub fill: Fill,
    pub t_bg: u8,
    pub score: LimeScore,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 300,
            scales: vec![50.0, 100.0, 200.0],
            sigma: 0.5,
            min_size: 50,
            kernel_width: 0.25,
            ridge_lambda: 0.01,
            fill: Fill::ForegroundMean,
            t_bg: 20,
            score: LimeScore::Dice,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
        }
        if self.scales.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one scale is required".into(),
            ));
        }
        if !(self.kernel_width > 0.0) {
            return Err(Error::InvalidConfig("kernel width must be > 0".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::InvalidConfig("ridge lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// `n x k` presence matrix; row 0 is all ones, the rest i.i.d. Bernoulli(0.5).
pub fn sample_ablations(k: usize, n: usize, seed: u64) -> Vec<Vec<bool>> {
    sample_ablations_stream(k, n, seed, 0)
}

/// As [`sample_ablations`], drawing from ChaCha8 stream `stream`.
pub fn sample_ablations_stream(k: usize, n: usize, seed: u64, stream: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n)
        .map(|i| {
            if i == 0 {
                vec![true; k]
            } else {
                (0..k).map(|_| rng.random_bool(0.5)).collect()
            }
        })
        .collect()
}

/// Replaces every superpixel `j` with `z[j - 1] == false` by `fill`. Label-0
/// pixels are never touched.
pub fn render_ablation(
    image: &ImageU8,
    labels: &LabelMap,
    z: &[bool],
    fill: u8,
) -> Result<ImageU8> {
    if labels.width != image.width() || labels.height != image.height() {
        return Err(Error::DimensionMismatch(
            "labels and image differ in size".into(),
        ));
    }
    if z.len() != labels.max_label() as usize {
        return Err(Error::DimensionMismatch(format!(
            "ablation vector has {} entries for {} superpixels",
            z.len(),
            labels.max_label()
        )));
    }
    let data = image
        .data()
        .iter()
        .zip(&labels.labels)
        .map(|(&v, &l)| if l > 0 && !z[l as usize - 1] { fill } else { v })
        .collect();
    ImageU8::gray(image.width(), image.height(), data)
}

/// `exp(-d² / width²)` with `d` the fraction of disabled superpixels.
pub fn kernel_weights(z: &[Vec<bool>], kernel_width: f64) -> Vec<f64> {
    z.iter()
        .map(|row| {
            let k = row.len().max(1) as f64;
            let d = row.iter().filter(|&&b| !b).count() as f64 / k;
            (-(d * d) / (kernel_width * kernel_width)).exp()
        })
        .collect()
}

/// Weighted ridge regression of `scores` on the presence features.
///
/// Features and scores are centered by their weighted means (absorbing the
/// intercept), then `(Zᵀ W Z + λ I) β = Zᵀ W s` is solved by Cholesky.
pub fn fit_weighted(
    z: &[Vec<bool>],
    scores: &[f64],
    weights: &[f64],
    ridge_lambda: f64,
) -> Result<Vec<f64>> {
    let n = z.len();
    if n == 0 || scores.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} rows, {} scores, {} weights",
            n,
            scores.len(),
            weights.len()
        )));
    }
    let k = z[0].len();
    if z.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch("ragged ablation matrix".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SingularFit);
    }
    let feat = |i: usize, j: usize| if z[i][j] { 1.0 } else { 0.0 };
    let z_mean: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|i| weights[i] * feat(i, j)).sum::<f64>() / total)
        .collect();
    let s_mean = (0..n).map(|i| weights[i] * scores[i]).sum::<f64>() / total;

    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    let mut centered = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            centered[j] = feat(i, j) - z_mean[j];
        }
        let ds = scores[i] - s_mean;
        for r in 0..k {
            let wr = weights[i] * centered[r];
            b[r] += wr * ds;
            for c in 0..=r {
                a[r * k + c] += wr * centered[c];
            }
        }
    }
    for r in 0..k {
        a[r * k + r] += ridge_lambda;
        for c in 0..r {
            a[c * k + r] = a[r * k + c];
        }
    }
    solve_spd(&mut a, &mut b, k)?;
    Ok(b)
}

/// In-place Cholesky solve of a symmetric positive-definite `k x k` system.
fn solve_spd(a: &mut [f64], b: &mut [f64], k: usize) -> Result<()> {
    let scale = (0..k)
        .map(|i| a[i * k + i].abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let tol = scale * 1e-13;
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > tol) {
            return Err(Error::SingularFit);
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for p in 0..j {
                v -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = v / d;
        }
    }
    for i in 0..k {
        let mut v = b[i];
        for p in 0..i {
            v -= a[i * k + p] * b[p];
        }
        b[i] = v / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut v = b[i];
        for p in i + 1..k {
            v -= a[p * k + i] * b[p];
        }
        b[i] = v / a[i * k + i];
    }
    Ok(())
}

/// Kernel-weighted ridge surrogate; see [`fit_weighted`].
pub fn fit_surrogate(
    z: &[Vec<bool>],
    scores: &[f64],
    kernel_width: f64,
    ridge_lambda: f64,
) -> Result<Vec<f64>> {
    fit_weighted(z, scores, &kernel_weights(z, kernel_width), ridge_lambda)
}

fn sample_score(
    score: LimeScore,
    pred: &Prediction,
    baseline: &Prediction,
    roi: Option<&BinaryMask>,
) -> Result<f64> {
    match score {
        LimeScore::Dice => dice(&pred.mask, &baseline.mask),
        LimeScore::MeanScore => Ok(relevance_score(pred, roi)),
    }
}

/// Scores every ablation row with the model, in row order.
#[allow(clippy::too_many_arguments)]
pub fn score_ablations(
    image: &ImageU8,
    labels: &LabelMap,
    z: &[Vec<bool>],
    predictor: &dyn Predictor,
    baseline: &Prediction,
    roi: Option<&BinaryMask>,
    fill: u8,
    score: LimeScore,
    workers: usize,
) -> Result<Vec<f64>, crate::exec::Aborted<Error>> {
    try_parallel_map(z.len(), workers, |i| {
        let ablated = render_ablation(image, labels, &z[i], fill)?;
        let pred = predictor.segment(&ablated)?;
        sample_score(score, &pred, baseline, roi)
    })
}

/// Per-pixel surrogate weight. Label-0 pixels take the minimum weight so
/// they land at zero after normalization.
pub fn paint_weights(labels: &LabelMap, beta: &[f64]) -> Vec<f64> {
    let floor = beta.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    labels
        .labels
        .iter()
        .map(|&l| if l == 0 { floor } else { beta[l as usize - 1] })
        .collect()
}

/// Diagnostics of one segmentation scale.
#[derive(Clone, Debug)]
pub struct ScaleResult {
    pub scale: f64,
    pub labels: LabelMap,
    /// Segments of the unrestricted partition.
    pub full_segments: usize,
    /// Unrestricted segments that intersect the ROI.
    pub roi_segments: usize,
    pub beta: Vec<f64>,
    /// Min-max normalized per-scale map (empty when the scale was skipped).
    pub map: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LimeOutput {
    pub saliency: SaliencyMap,
    pub report: ExplainReport,
    pub baseline: Prediction,
    pub scales: Vec<ScaleResult>,
}

fn segments_touching(labels: &LabelMap, roi: &BinaryMask) -> usize {
    let mut touched = vec![false; labels.max_label() as usize + 1];
    for (&l, &r) in labels.labels.iter().zip(roi.data()) {
        if r != 0 {
            touched[l as usize] = true;
        }
    }
    touched.iter().skip(1).filter(|&&t| t).count()
}

pub fn run(
    image: &ImageU8,
    predictor: &dyn Predictor,
    roi: Option<&BinaryMask>,
    cfg: &LimeConfig,
    opts: &RunOptions,
) -> Result<LimeOutput, EngineFailure> {
    let start = web_time::Instant::now();
    cfg.validate()?;
    ensure_gray(image)?;
    check_roi(image, roi)?;
    let info = predictor.info();
    check_input(&info, image)?;
    let (w, h) = image.dims();

    let mut report = ExplainReport {
        method: Method::Lime,
        gated: roi.is_some(),
        n_patch: 0,
        n_patch_full: 0,
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

    let fill = cfg.fill.resolve(image, cfg.t_bg);
    let workers = effective_workers(opts.jobs, info.max_concurrency);
    let mut calls = 1u64;
    let mut sum = vec![0.0; w * h];
    let mut coverage = vec![0u32; w * h];
    let mut kept = 0usize;
    let mut scales = Vec::with_capacity(cfg.scales.len());

    for (s_idx, &scale) in cfg.scales.iter().enumerate() {
        let felz = FelzConfig {
            scale,
            sigma: cfg.sigma,
            min_size: cfg.min_size,
        };
        let full = felzenszwalb(image, &felz)?;
        let full_segments = full.segment_count();
        let (labels, roi_segments) = match roi {
            Some(r) => (restrict_to_roi(&full, r)?, segments_touching(&full, r)),
            None => (full, full_segments),
        };
        report.n_patch_full += full_segments as u64;
        report.n_patch += roi_segments as u64;

        let k = labels.max_label() as usize;
        if k == 0 {
            report.warnings.push(format!(
                "scale {scale} skipped: no superpixels inside the ROI"
            ));
            scales.push(ScaleResult {
                scale,
                labels,
                full_segments,
                roi_segments,
                beta: Vec::new(),
                map: Vec::new(),
            });
            continue;
        }

        let z = sample_ablations_stream(k, cfg.n_samples, cfg.seed, s_idx as u64);
        let scores = score_ablations(
            image, &labels, &z, predictor, &baseline, roi, fill, cfg.score, workers,
        )
        .map_err(|aborted| {
            let mut partial = report.clone();
            partial.flops = ledger(
                opts.roi_flops,
                calls + aborted.completed as u64,
                info.flops_per_call,
            );
            partial.wall_clock_ms = elapsed_ms(start);
            partial.warnings.push(format!(
                "invalid: predictor failed at scale {scale} after {} of {} samples",
                aborted.completed, cfg.n_samples
            ));
            EngineFailure {
                error: aborted.error,
                partial: Some(Box::new(partial)),
            }
        })?;
        calls += z.len() as u64;

        let beta = fit_surrogate(&z, &scores, cfg.kernel_width, cfg.ridge_lambda)?;
        let map = min_max_normalize(&paint_weights(&labels, &beta));
        for i in 0..w * h {
            sum[i] += map[i];
            coverage[i] += u32::from(labels.labels[i] > 0);
        }
        kept += 1;
        scales.push(ScaleResult {
            scale,
            labels,
            full_segments,
            roi_segments,
            beta,
            map,
        });
    }

    let raw = if kept > 0 {
        sum.iter().map(|&v| v / kept as f64).collect()
    } else {
        vec![0.0; w * h]
    };
    let saliency = SaliencyMap::from_raw(w, h, raw, coverage);

    report.rho = if report.n_patch_full > 0 {
        report.n_patch as f64 / report.n_patch_full as f64
    } else {
        0.0
    };
    let (d, j) = localization_scores(&saliency, &baseline)?;
    report.dice_vs_baseline = d;
    report.iou_vs_baseline = j;
    report.flops = ledger(opts.roi_flops, calls, info.flops_per_call);
    report.wall_clock_ms = elapsed_ms(start);

    Ok(LimeOutput {
        saliency,
        report,
        baseline,
        scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive(k: usize) -> Vec<Vec<bool>> {
        (0..1u32 << k)
            .map(|m| (0..k).map(|j| m >> j & 1 == 1).collect())
            .collect()
    }

    #[test]
    fn ablation_rows() {
        let z = sample_ablations(1, 4, 3);
        assert_eq!(z.len(), 4);
        assert_eq!(z[0], vec![true]);
        let z = sample_ablations(5, 50, 3);
        assert!(z[0].iter().all(|&b| b));
        assert_eq!(z, sample_ablations(5, 50, 3));
        assert_ne!(z, sample_ablations(5, 50, 4));
    }

    #[test]
    fn column_means_near_half() {
        let z = sample_ablations(6, 10_000, 99);
        for j in 0..6 {
            let mean = z.iter().skip(1).filter(|r| r[j]).count() as f64 / 9_999.0;
            assert!((mean - 0.5).abs() <= 0.02, "column {j}: {mean}");
        }
    }

    #[test]
    fn render_cases() {
        let img = ImageU8::gray(4, 1, vec![10, 20, 30, 40]).unwrap();
        let labels = LabelMap::new(4, 1, vec![1, 2, 0, 2]).unwrap();
        assert_eq!(
            render_ablation(&img, &labels, &[true, true], 0).unwrap(),
            img
        );
        assert_eq!(
            render_ablation(&img, &labels, &[false, false], 0)
                .unwrap()
                .data(),
            &[0, 0, 30, 0]
        );
        assert_eq!(
            render_ablation(&img, &labels, &[true, false], 7)
                .unwrap()
                .data(),
            &[10, 7, 30, 7]
        );
        assert!(render_ablation(&img, &labels, &[true], 0).is_err());
    }

    #[test]
    fn recovers_two_coefficients() {
        let z = exhaustive(2);
        let s: Vec<f64> = z
            .iter()
            .map(|r| 0.3 * f64::from(u8::from(r[0])) + 0.7 * f64::from(u8::from(r[1])))
            .collect();
        let beta = fit_surrogate(&z, &s, 0.25, 1e-12).unwrap();
        assert!((beta[0] - 0.3).abs() < 1e-9);
        assert!((beta[1] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn constant_scores_give_zero() {
        let z = sample_ablations(3, 40, 1);
        let beta = fit_surrogate(&z, &[0.8; 40], 0.25, 0.01).unwrap();
        assert!(beta.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn duplicated_rows_match_doubled_weights() {
        let z = sample_ablations(3, 12, 5);
        let s: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut z2 = z.clone();
        z2.extend(z.iter().cloned());
        let mut s2 = s.clone();
        s2.extend(s.iter().copied());
        let dup = fit_surrogate(&z2, &s2, 0.25, 0.01).unwrap();
        let w: Vec<f64> = kernel_weights(&z, 0.25).iter().map(|w| 2.0 * w).collect();
        let doubled = fit_weighted(&z, &s, &w, 0.01).unwrap();
        for (a, b) in dup.iter().zip(&doubled) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_without_ridge_is_singular() {
        // Column 1 never varies.
        let z = vec![vec![true, true], vec![false, true], vec![true, true]];
        assert!(matches!(
            fit_surrogate(&z, &[1.0, 0.0, 1.0], 0.25, 0.0),
            Err(Error::SingularFit)
        ));
        assert!(fit_surrogate(&z, &[1.0, 0.0, 1.0], 0.25, 0.1).is_ok());
    }

    #[test]
    fn painting_preserves_rank() {
        let labels = LabelMap::new(5, 1, vec![0, 1, 2, 3, 3]).unwrap();
        let beta = [0.2, -0.5, 0.9];
        let map = min_max_normalize(&paint_weights(&labels, &beta));
        assert_eq!(map[0], 0.0);
        assert!(map[3] > map[1] && map[1] > map[2]);
        assert_eq!(map[3], map[4]);
    }
}
