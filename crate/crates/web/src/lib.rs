//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page owns one [`Demo`]: a synthetic scan with a bright lesion, scored by
//! a region oracle that watches the lesion. It can enhance the scan, derive an
//! ROI from smoothed brightness and run occlusion or RISE with or without that
//! ROI. Everything runs single-threaded.

use roixai::occlusion::{self, OcclusionConfig};
use roixai::predictor::RegionOracle;
use roixai::preprocess::{enhance, PreprocessConfig};
use roixai::report::{heatmap_rgb, write_report};
use roixai::rise::{self, RiseConfig};
use roixai::roi::{binarize_importance, RoiConfig};
use roixai::{BinaryMask, ExplainReport, FloatMap, ImageU8, RunOptions, SaliencyMap};
use wasm_bindgen::prelude::*;

/// Gray scan of `size x size`: an elliptical body, a bright lesion in the
/// upper left quadrant and hash noise keyed by `seed`.
pub fn phantom(size: usize, seed: u32) -> (ImageU8, BinaryMask) {
    let s = size as f64;
    let lesion = BinaryMask::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - 0.36 * s, y as f64 - 0.38 * s);
        dx * dx + 1.4 * dy * dy <= (0.07 * s).powi(2)
    });
    let data = (0..size * size)
        .map(|i| {
            let (x, y) = (i % size, i / size);
            let (dx, dy) = (x as f64 / s - 0.5, y as f64 / s - 0.5);
            if dx * dx / 0.18 + dy * dy / 0.2 > 1.0 {
                return 6;
            }
            let h = (x as u32).wrapping_mul(73_856_093)
                ^ (y as u32).wrapping_mul(19_349_663)
                ^ seed.wrapping_mul(83_492_791);
            let noise = (h.wrapping_mul(2_654_435_761) >> 27) as f64;
            let base = if lesion.get(x, y) {
                150.0
            } else {
                70.0 + 30.0 * (1.0 - dy.abs() * 2.0)
            };
            (base + noise).min(255.0) as u8
        })
        .collect();
    (ImageU8::gray(size, size, data).expect("dims match"), lesion)
}

fn gray_to_rgba(gray: &[u8]) -> Vec<u8> {
    gray.iter().flat_map(|&v| [v, v, v, 255]).collect()
}

fn saliency_rgba(map: &SaliencyMap) -> Vec<u8> {
    heatmap_rgb(map)
        .chunks(3)
        .flat_map(|c| [c[0], c[1], c[2], 255])
        .collect()
}

/// Result of one explanation run.
#[wasm_bindgen]
pub struct Explanation {
    rgba: Vec<u8>,
    report: ExplainReport,
}

#[wasm_bindgen]
impl Explanation {
    /// Colormapped heatmap as RGBA bytes.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    pub fn report_json(&self) -> String {
        String::from_utf8(write_report(&self.report)).expect("report is ASCII JSON")
    }

    pub fn rho(&self) -> f64 {
        self.report.rho
    }

    pub fn calls(&self) -> f64 {
        self.report.flops.calls as f64
    }

    pub fn wall_clock_ms(&self) -> f64 {
        self.report.wall_clock_ms
    }
}

#[wasm_bindgen]
pub struct Demo {
    original: ImageU8,
    image: ImageU8,
    lesion: BinaryMask,
    roi: Option<BinaryMask>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, seed: u32) -> Demo {
        let (image, lesion) = phantom(size.clamp(32, 512), seed);
        Demo {
            original: image.clone(),
            image,
            lesion,
            roi: None,
        }
    }

    pub fn size(&self) -> usize {
        self.image.width()
    }

    /// Current working image as RGBA.
    pub fn image_rgba(&self) -> Vec<u8> {
        gray_to_rgba(self.image.data())
    }

    /// Replaces the working image with the enhanced original.
    pub fn enhance(&mut self, clip: f64, t_bg: u8) -> Result<Vec<u8>, JsError> {
        self.apply_enhance(clip, t_bg)
            .map_err(|e| JsError::new(&e))?;
        Ok(self.image_rgba())
    }

    pub fn reset(&mut self) -> Vec<u8> {
        self.image = self.original.clone();
        self.roi = None;
        self.image_rgba()
    }

    /// Thresholds smoothed brightness and grows the result by `margin`
    /// pixels. Returns the image with the ROI tinted.
    pub fn set_roi(&mut self, threshold: f64, margin: usize) -> Result<Vec<u8>, JsError> {
        self.apply_roi(threshold, margin)
            .map_err(|e| JsError::new(&e))?;
        Ok(self.overlay_rgba())
    }

    pub fn clear_roi(&mut self) -> Vec<u8> {
        self.roi = None;
        self.image_rgba()
    }

    pub fn roi_pixels(&self) -> usize {
        self.roi.as_ref().map_or(0, BinaryMask::count)
    }

    /// Runs `"occlusion"` or `"rise"`; `gated` uses the current ROI.
    pub fn explain(
        &self,
        method: &str,
        gated: bool,
        samples: usize,
        seed: u32,
    ) -> Result<Explanation, JsError> {
        self.run(method, gated, samples, seed)
            .map_err(|e| JsError::new(&e))
    }
}

impl Demo {
    fn apply_enhance(&mut self, clip: f64, t_bg: u8) -> Result<(), String> {
        let cfg = PreprocessConfig {
            clahe_clip: clip,
            t_bg,
            target_size: self.original.width(),
            ..Default::default()
        };
        self.image = enhance(&self.original, &cfg).map_err(|e| e.to_string())?;
        Ok(())
    }

    fn apply_roi(&mut self, threshold: f64, margin: usize) -> Result<(), String> {
        let (w, h) = self.image.dims();
        let importance = FloatMap::new(
            w,
            h,
            self.image.data().iter().map(|&v| f64::from(v)).collect(),
        )
        .map_err(|e| e.to_string())?;
        let cfg = RoiConfig {
            gauss_sigma: 2.0,
            threshold,
            top_fraction: None,
        };
        let mask = binarize_importance(&importance, &cfg).map_err(|e| e.to_string())?;
        self.roi = Some(mask.dilate(margin));
        Ok(())
    }

    fn overlay_rgba(&self) -> Vec<u8> {
        let mut rgba = self.image_rgba();
        if let Some(roi) = &self.roi {
            for (px, &m) in rgba.chunks_mut(4).zip(roi.data()) {
                if m != 0 {
                    px[0] = px[0] / 2 + 110;
                    px[2] /= 2;
                }
            }
        }
        rgba
    }

    fn run(
        &self,
        method: &str,
        gated: bool,
        samples: usize,
        seed: u32,
    ) -> Result<Explanation, String> {
        let oracle = RegionOracle::new(self.image.clone(), self.lesion.clone(), 0.5)
            .map_err(|e| e.to_string())?;
        let roi = if gated {
            Some(self.roi.as_ref().ok_or("set an ROI first")?)
        } else {
            None
        };
        let opts = RunOptions {
            jobs: 1,
            roi_flops: 0,
        };
        let size = self.image.width();
        let (map, report) = match method {
            "occlusion" => {
                let cfg = OcclusionConfig {
                    patch: (size / 7).max(2),
                    stride: (size / 14).max(1),
                    ..Default::default()
                };
                let out = occlusion::run(&self.image, &oracle, roi, &cfg, &opts)
                    .map_err(|e| e.to_string())?;
                (out.saliency, out.report)
            }
            "rise" => {
                let cfg = RiseConfig {
                    n_masks: samples.max(1),
                    seed: u64::from(seed),
                    ..Default::default()
                };
                let out =
                    rise::run(&self.image, &oracle, roi, &cfg, &opts).map_err(|e| e.to_string())?;
                (out.fidelity, out.report)
            }
            other => return Err(format!("unknown method '{other}'")),
        };
        Ok(Explanation {
            rgba: saliency_rgba(&map),
            report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_is_deterministic_and_lesion_is_brightest() {
        let (a, lesion) = phantom(96, 3);
        assert_eq!(a, phantom(96, 3).0);
        assert!(lesion.count() > 0);
        let inside = a
            .data()
            .iter()
            .zip(lesion.data())
            .filter(|(_, &m)| m == 1)
            .map(|(&v, _)| v)
            .min()
            .unwrap();
        let outside = a
            .data()
            .iter()
            .zip(lesion.data())
            .filter(|(_, &m)| m == 0)
            .map(|(&v, _)| v)
            .max()
            .unwrap();
        assert!(inside > outside);
    }

    #[test]
    fn roi_covers_lesion_and_gating_saves_calls() {
        let mut demo = Demo::new(112, 1);
        demo.apply_roi(0.7, 4).unwrap();
        let roi = demo.roi.clone().unwrap();
        for i in 0..112 * 112 {
            if demo.lesion.data()[i] == 1 {
                assert_eq!(roi.data()[i], 1);
            }
        }
        let full = demo.run("occlusion", false, 0, 0).unwrap();
        let gated = demo.run("occlusion", true, 0, 0).unwrap();
        assert_eq!(full.rho(), 1.0);
        assert!(gated.rho() < 1.0);
        assert!(gated.calls() < full.calls());
        assert_eq!(gated.rgba.len(), 112 * 112 * 4);
    }

    #[test]
    fn rise_and_enhance_run() {
        let mut demo = Demo::new(64, 2);
        demo.apply_enhance(2.0, 20).unwrap();
        let out = demo.run("rise", false, 30, 7).unwrap();
        assert_eq!(out.calls(), 31.0);
        assert!(out.report_json().contains("\"method\": \"rise\""));
        assert!(demo.run("rise", true, 30, 7).is_err());
        assert!(demo.run("lime", false, 30, 7).is_err());
    }
}
