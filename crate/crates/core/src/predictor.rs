//! Black-box segmentation models.
//!
//! Engines see a model only through [`Predictor`]. Built-in oracles cover
//! tests and demos; [`HttpPredictor`] bridges to an external model server.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::superpixel::LabelMap;
use crate::types::{BinaryMask, FloatMap, ImageU8};

/// Segmentation output. When `score_map` is present, `mask` is its
/// thresholding at 0.5.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mask: BinaryMask,
    pub score_map: Option<FloatMap>,
}

impl Prediction {
    pub fn from_mask(mask: BinaryMask) -> Self {
        Self {
            mask,
            score_map: None,
        }
    }

    pub fn from_scores(scores: FloatMap) -> Self {
        let mask = BinaryMask::new(
            scores.width(),
            scores.height(),
            scores.data().iter().map(|&s| u8::from(s >= 0.5)).collect(),
        )
        .expect("score map dims are valid");
        Self {
            mask,
            score_map: Some(scores),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorInfo {
    pub name: String,
    pub flops_per_call: u64,
    pub deterministic: bool,
    /// 0 = unlimited.
    pub max_concurrency: usize,
    /// Required input size, if the model has one.
    pub input_size: Option<(usize, usize)>,
}

pub trait Predictor: Send + Sync {
    fn info(&self) -> PredictorInfo;

    fn segment(&self, image: &ImageU8) -> Result<Prediction>;
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn info(&self) -> PredictorInfo {
        (**self).info()
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        (**self).segment(image)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn info(&self) -> PredictorInfo {
        (**self).info()
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        (**self).segment(image)
    }
}

/// Rejects images that do not match the predictor's declared input size.
pub fn check_input(info: &PredictorInfo, image: &ImageU8) -> Result<()> {
    if let Some((w, h)) = info.input_size {
        if image.dims() != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "predictor '{}' expects {}x{}, got {}x{}",
                info.name,
                w,
                h,
                image.width(),
                image.height()
            )));
        }
    }
    Ok(())
}

/// Predicts its support region while at least `sensitivity` of the support's
/// pixels keep their reference intensity, and an empty mask otherwise.
/// Pixels outside the support never influence the output.
#[derive(Clone, Debug)]
pub struct RegionOracle {
    reference: ImageU8,
    support: BinaryMask,
    sensitivity: f64,
    flops_per_call: u64,
}

impl RegionOracle {
    pub fn new(reference: ImageU8, support: BinaryMask, sensitivity: f64) -> Result<Self> {
        if !reference.is_gray() {
            return Err(Error::DimensionMismatch(
                "oracle reference must be grayscale".into(),
            ));
        }
        support.ensure_dims(reference.width(), reference.height())?;
        if !(0.0..=1.0).contains(&sensitivity) {
            return Err(Error::InvalidConfig(format!(
                "sensitivity {sensitivity} outside [0, 1]"
            )));
        }
        Ok(Self {
            reference,
            support,
            sensitivity,
            flops_per_call: 0,
        })
    }

    pub fn with_flops(mut self, flops_per_call: u64) -> Self {
        self.flops_per_call = flops_per_call;
        self
    }

    pub fn support(&self) -> &BinaryMask {
        &self.support
    }

    /// Fraction of support pixels equal to the reference.
    pub fn retained_fraction(&self, image: &ImageU8) -> f64 {
        let total = self.support.count();
        if total == 0 {
            return 1.0;
        }
        let kept = self
            .support
            .data()
            .iter()
            .zip(image.data().iter().zip(self.reference.data()))
            .filter(|(&s, (a, b))| s != 0 && a == b)
            .count();
        kept as f64 / total as f64
    }
}

impl Predictor for RegionOracle {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "region-oracle".into(),
            flops_per_call: self.flops_per_call,
            deterministic: true,
            max_concurrency: 0,
            input_size: Some(self.reference.dims()),
        }
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        check_input(&self.info(), image)?;
        if !image.is_gray() {
            return Err(Error::DimensionMismatch(
                "oracle input must be grayscale".into(),
            ));
        }
        let mask = if self.retained_fraction(image) >= self.sensitivity {
            self.support.clone()
        } else {
            BinaryMask::zeros(image.width(), image.height())
        };
        Ok(Prediction::from_mask(mask))
    }
}

/// Scores an image as `clamp(bias + Σ_j w_j · mean_j, 0, 1)`, where `mean_j`
/// is the unit-range mean intensity of region `j` (label `j + 1`). The score
/// is reported as a constant score map.
#[derive(Clone, Debug)]
pub struct LinearOracle {
    regions: LabelMap,
    weights: Vec<f64>,
    bias: f64,
    flops_per_call: u64,
}

impl LinearOracle {
    pub fn new(regions: LabelMap, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if regions.max_label() as usize > weights.len() {
            return Err(Error::InvalidConfig(format!(
                "{} regions but {} weights",
                regions.max_label(),
                weights.len()
            )));
        }
        Ok(Self {
            regions,
            weights,
            bias,
            flops_per_call: 0,
        })
    }

    pub fn with_flops(mut self, flops_per_call: u64) -> Self {
        self.flops_per_call = flops_per_call;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unit-range mean intensity per region, index `j` for label `j + 1`.
    pub fn region_means(&self, image: &ImageU8) -> Vec<f64> {
        let k = self.weights.len();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&l, &v) in self.regions.labels.iter().zip(image.data()) {
            if l > 0 {
                sums[l as usize - 1] += f64::from(v) / 255.0;
                counts[l as usize - 1] += 1;
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    }

    pub fn score(&self, image: &ImageU8) -> f64 {
        let linear: f64 = self
            .region_means(image)
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| m * w)
            .sum();
        (self.bias + linear).clamp(0.0, 1.0)
    }
}

impl Predictor for LinearOracle {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "linear-oracle".into(),
            flops_per_call: self.flops_per_call,
            deterministic: true,
            max_concurrency: 0,
            input_size: Some((self.regions.width, self.regions.height)),
        }
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        check_input(&self.info(), image)?;
        let s = self.score(image);
        let scores = FloatMap::new(image.width(), image.height(), vec![s; image.pixel_count()])?;
        Ok(Prediction::from_scores(scores))
    }
}

/// Returns the same mask for every input.
#[derive(Clone, Debug)]
pub struct ConstantPredictor {
    pub mask: BinaryMask,
}

impl Predictor for ConstantPredictor {
    fn info(&self) -> PredictorInfo {
        PredictorInfo {
            name: "constant".into(),
            flops_per_call: 0,
            deterministic: true,
            max_concurrency: 0,
            input_size: Some(self.mask.dims()),
        }
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        check_input(&self.info(), image)?;
        Ok(Prediction::from_mask(self.mask.clone()))
    }
}

/// Adds a fixed delay to every call of the wrapped predictor.
pub struct SlowPredictor<P> {
    inner: P,
    delay: Duration,
}

impl<P> SlowPredictor<P> {
    pub fn new(inner: P, delay: Duration) -> Self {
        Self { inner, delay }
    }
}

impl<P: Predictor> Predictor for SlowPredictor<P> {
    fn info(&self) -> PredictorInfo {
        self.inner.info()
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        std::thread::sleep(self.delay);
        self.inner.segment(image)
    }
}

/// Counts `segment` calls on the wrapped predictor.
pub struct CountingPredictor<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn info(&self) -> PredictorInfo {
        self.inner.info()
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.segment(image)
    }
}

pub const PROTOCOL_VERSION: u32 = 1;

/// `GET /info` response body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoWire {
    pub name: String,
    pub flops_per_call: u64,
    pub deterministic: bool,
    pub max_concurrency: usize,
    pub input_width: usize,
    pub input_height: usize,
    pub protocol_version: u32,
}

/// `POST /segment` request body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub dtype: String,
    pub pixels: String,
}

/// `POST /segment` response body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: String,
    pub score_map: Option<String>,
}

impl SegmentRequest {
    pub fn encode(image: &ImageU8) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            channels: image.channels(),
            dtype: "u8".into(),
            pixels: B64.encode(image.data()),
        }
    }

    pub fn decode(&self) -> Result<ImageU8> {
        if self.dtype != "u8" {
            return Err(Error::Protocol(format!(
                "unsupported dtype '{}'",
                self.dtype
            )));
        }
        let pixels = B64
            .decode(&self.pixels)
            .map_err(|e| Error::Protocol(format!("pixels: {e}")))?;
        ImageU8::new(self.width, self.height, self.channels, pixels)
            .map_err(|e| Error::Protocol(e.to_string()))
    }
}

impl SegmentResponse {
    pub fn encode(prediction: &Prediction) -> Self {
        Self {
            mask: B64.encode(prediction.mask.data()),
            score_map: prediction.score_map.as_ref().map(|s| {
                let bytes: Vec<u8> = s
                    .data()
                    .iter()
                    .flat_map(|&v| (v as f32).to_le_bytes())
                    .collect();
                B64.encode(bytes)
            }),
        }
    }

    pub fn decode(&self, width: usize, height: usize) -> Result<Prediction> {
        let mask_bytes = B64
            .decode(&self.mask)
            .map_err(|e| Error::Protocol(format!("mask: {e}")))?;
        let mask = BinaryMask::new(width, height, mask_bytes)
            .map_err(|e| Error::Protocol(format!("mask: {e}")))?;
        let score_map = match &self.score_map {
            None => None,
            Some(enc) => {
                let bytes = B64
                    .decode(enc)
                    .map_err(|e| Error::Protocol(format!("score_map: {e}")))?;
                if bytes.len() != width * height * 4 {
                    return Err(Error::Protocol(format!(
                        "score_map has {} bytes, expected {}",
                        bytes.len(),
                        width * height * 4
                    )));
                }
                let data = bytes
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                    .collect();
                Some(FloatMap::new(width, height, data)?)
            }
        };
        Ok(Prediction { mask, score_map })
    }
}

#[cfg(feature = "http")]
/// Client for a model served over the JSON wire protocol.
pub struct HttpPredictor {
    base: String,
    agent: ureq::Agent,
    info: PredictorInfo,
}

#[cfg(feature = "http")]
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[cfg(feature = "http")]
const MAX_BODY: u64 = 256 * 1024 * 1024;

#[cfg(feature = "http")]
fn transport(e: ureq::Error) -> Error {
    match e {
        ureq::Error::StatusCode(code) => Error::Protocol(format!("server answered HTTP {code}")),
        other => Error::Transport(other.to_string()),
    }
}

#[cfg(feature = "http")]
impl HttpPredictor {
    /// Performs the `/info` handshake.
    pub fn connect(endpoint: &str, timeout: Duration) -> Result<Self> {
        let base = endpoint.trim_end_matches('/').to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let mut resp = agent
            .get(format!("{base}/info"))
            .call()
            .map_err(transport)?;
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_string()
            .map_err(transport)?;
        let wire: InfoWire = serde_json::from_str(&body)
            .map_err(|e| Error::Protocol(format!("bad /info body: {e}")))?;
        if wire.protocol_version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!(
                "protocol version {} (expected {})",
                wire.protocol_version, PROTOCOL_VERSION
            )));
        }
        let input_size = (wire.input_width > 0 && wire.input_height > 0)
            .then_some((wire.input_width, wire.input_height));
        Ok(Self {
            base,
            agent,
            info: PredictorInfo {
                name: wire.name,
                flops_per_call: wire.flops_per_call,
                deterministic: wire.deterministic,
                max_concurrency: wire.max_concurrency,
                input_size,
            },
        })
    }
}

#[cfg(feature = "http")]
impl Predictor for HttpPredictor {
    fn info(&self) -> PredictorInfo {
        self.info.clone()
    }

    fn segment(&self, image: &ImageU8) -> Result<Prediction> {
        check_input(&self.info, image)?;
        let request = serde_json::to_string(&SegmentRequest::encode(image))
            .map_err(|e| Error::Protocol(e.to_string()))?;
        let mut resp = self
            .agent
            .post(format!("{}/segment", self.base))
            .header("Content-Type", "application/json")
            .send(request)
            .map_err(transport)?;
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_string()
            .map_err(transport)?;
        let wire: SegmentResponse = serde_json::from_str(&body)
            .map_err(|e| Error::Protocol(format!("bad /segment body: {e}")))?;
        wire.decode(image.width(), image.height())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ImageU8 {
        ImageU8::gray(4, 4, (0..16).map(|v| 100 + v).collect()).unwrap()
    }

    fn support() -> BinaryMask {
        BinaryMask::from_fn(4, 4, |x, y| x < 2 && y < 2)
    }

    #[test]
    fn region_oracle_identity_and_zeroed() {
        let oracle = RegionOracle::new(reference(), support(), 1.0).unwrap();
        assert_eq!(oracle.segment(&reference()).unwrap().mask, support());

        let mut data = reference().into_data();
        for (i, v) in data.iter_mut().enumerate() {
            if support().data()[i] == 1 {
                *v = 0;
            }
        }
        let zeroed = ImageU8::gray(4, 4, data).unwrap();
        assert!(oracle.segment(&zeroed).unwrap().mask.is_empty());
    }

    #[test]
    fn region_oracle_sensitivity_boundary() {
        // Half of the support occluded.
        let mut data = reference().into_data();
        data[0] = 0;
        data[1] = 0;
        let half = ImageU8::gray(4, 4, data).unwrap();
        let at = RegionOracle::new(reference(), support(), 0.5).unwrap();
        assert_eq!(at.segment(&half).unwrap().mask, support());
        let above = RegionOracle::new(reference(), support(), 0.51).unwrap();
        assert!(above.segment(&half).unwrap().mask.is_empty());
    }

    #[test]
    fn region_oracle_rejects_wrong_size() {
        let oracle = RegionOracle::new(reference(), support(), 1.0).unwrap();
        let small = ImageU8::filled(2, 2, 0).unwrap();
        assert!(oracle.segment(&small).is_err());
    }

    #[test]
    fn linear_oracle_hand_value() {
        // Three vertical strips of widths 1, 1, 2.
        let labels = LabelMap::new(4, 1, vec![1, 2, 3, 3]).unwrap();
        let image = ImageU8::gray(4, 1, vec![255, 51, 102, 204]).unwrap();
        let oracle = LinearOracle::new(labels, vec![0.1, 0.5, 0.4], 0.05).unwrap();
        // means: 1.0, 0.2, 0.6 -> 0.05 + 0.1 + 0.1 + 0.24 = 0.49
        assert!((oracle.score(&image) - 0.49).abs() < 1e-12);
        let pred = oracle.segment(&image).unwrap();
        assert!(pred.mask.is_empty());
        assert!((pred.score_map.unwrap().data()[0] - 0.49).abs() < 1e-12);
    }

    #[test]
    fn linear_oracle_clamps() {
        let labels = LabelMap::new(1, 1, vec![1]).unwrap();
        let image = ImageU8::gray(1, 1, vec![255]).unwrap();
        assert_eq!(
            LinearOracle::new(labels.clone(), vec![3.0], 0.0)
                .unwrap()
                .score(&image),
            1.0
        );
        assert_eq!(
            LinearOracle::new(labels, vec![-3.0], 0.0)
                .unwrap()
                .score(&image),
            0.0
        );
    }

    #[test]
    fn counting_predictor_counts() {
        let oracle =
            CountingPredictor::new(RegionOracle::new(reference(), support(), 1.0).unwrap());
        for _ in 0..1000 {
            oracle.segment(&reference()).unwrap();
        }
        assert_eq!(oracle.calls(), 1000);
    }

    #[test]
    fn wire_codec_round_trip() {
        let img = reference();
        let req = SegmentRequest::encode(&img);
        assert_eq!(req.decode().unwrap(), img);

        let scores = FloatMap::new(2, 1, vec![0.25, 0.75]).unwrap();
        let pred = Prediction::from_scores(scores);
        let resp = SegmentResponse::encode(&pred);
        assert_eq!(resp.decode(2, 1).unwrap(), pred);
    }

    #[test]
    fn wire_decode_rejects_garbage() {
        let resp = SegmentResponse {
            mask: "!!!".into(),
            score_map: None,
        };
        assert!(matches!(resp.decode(1, 1), Err(Error::Protocol(_))));
        let resp = SegmentResponse {
            mask: B64.encode([0u8, 7]),
            score_map: None,
        };
        assert!(matches!(resp.decode(2, 1), Err(Error::Protocol(_))));
    }
}
