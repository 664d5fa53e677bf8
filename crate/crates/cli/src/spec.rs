//! `--predictor` grammar.

use std::path::{Path, PathBuf};
use std::time::Duration;

use roixai::io::{read_labels, read_mask};
use roixai::predictor::{ConstantPredictor, LinearOracle, RegionOracle, SlowPredictor};
use roixai::{ImageU8, Predictor};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum PredictorSpec {
    Region {
        mask: PathBuf,
        sensitivity: f64,
    },
    Linear {
        file: PathBuf,
    },
    Constant {
        mask: PathBuf,
    },
    Slow {
        delay_ms: u64,
        inner: Box<PredictorSpec>,
    },
    Http {
        url: String,
    },
}

impl PredictorSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::input(format!("predictor '{spec}': {why}"));
        if spec.starts_with("http://") || spec.starts_with("https://") {
            return Ok(PredictorSpec::Http {
                url: spec.to_string(),
            });
        }
        let (kind, rest) = spec.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        match kind {
            "region" => {
                let (mask, sensitivity) = match rest.rsplit_once(':') {
                    Some((m, s)) => match s.parse::<f64>() {
                        Ok(v) => (m, v),
                        Err(_) => (rest, 1.0),
                    },
                    None => (rest, 1.0),
                };
                if mask.is_empty() {
                    return Err(bad("empty mask path"));
                }
                Ok(PredictorSpec::Region {
                    mask: mask.into(),
                    sensitivity,
                })
            }
            "linear" if !rest.is_empty() => Ok(PredictorSpec::Linear { file: rest.into() }),
            "constant" if !rest.is_empty() => Ok(PredictorSpec::Constant { mask: rest.into() }),
            "slow" => {
                let (ms, inner) = rest
                    .split_once(':')
                    .ok_or_else(|| bad("expected slow:<ms>:<spec>"))?;
                let delay_ms = ms
                    .parse()
                    .map_err(|_| bad("delay must be whole milliseconds"))?;
                Ok(PredictorSpec::Slow {
                    delay_ms,
                    inner: Box::new(PredictorSpec::parse(inner)?),
                })
            }
            _ => Err(bad("unknown predictor kind")),
        }
    }

    /// Instantiates the predictor. Oracles that need a reference image use
    /// `image`, the image being explained.
    pub fn build(
        &self,
        image: &ImageU8,
        timeout: Duration,
    ) -> Result<Box<dyn Predictor>, CliError> {
        Ok(match self {
            PredictorSpec::Region { mask, sensitivity } => {
                let support = read_mask(mask)
                    .map_err(|e| CliError::input(format!("{}: {e}", mask.display())))?;
                Box::new(RegionOracle::new(image.clone(), support, *sensitivity)?)
            }
            PredictorSpec::Constant { mask } => {
                let mask = read_mask(mask)
                    .map_err(|e| CliError::input(format!("{}: {e}", mask.display())))?;
                Box::new(ConstantPredictor { mask })
            }
            PredictorSpec::Linear { file } => Box::new(load_linear(file)?),
            PredictorSpec::Slow { delay_ms, inner } => Box::new(SlowPredictor::new(
                inner.build(image, timeout)?,
                Duration::from_millis(*delay_ms),
            )),
            PredictorSpec::Http { url } => {
                Box::new(roixai::predictor::HttpPredictor::connect(url, timeout)?)
            }
        })
    }
}

/// Linear oracle description: `labels=<16-bit PGM>`, `weights=a,b,...`,
/// optional `bias=` and `flops=`. Relative paths resolve against the file.
pub fn load_linear(path: &Path) -> Result<LinearOracle, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let pairs = crate::config::parse(&text)?;
    let get = |k: &str| {
        pairs
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
    };
    let bad = |why: String| CliError::input(format!("{}: {why}", path.display()));

    let labels_path = get("labels").ok_or_else(|| bad("missing labels=".into()))?;
    let labels_path = path.parent().unwrap_or(Path::new(".")).join(labels_path);
    let labels = read_labels(&labels_path).map_err(|e| bad(format!("labels: {e}")))?;
    let weights = get("weights")
        .ok_or_else(|| bad("missing weights=".into()))?
        .split(',')
        .map(|w| w.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| bad(format!("weights: {e}")))?;
    let bias = get("bias")
        .map(str::parse::<f64>)
        .transpose()
        .map_err(|e| bad(format!("bias: {e}")))?
        .unwrap_or(0.0);
    let flops = get("flops")
        .map(str::parse::<u64>)
        .transpose()
        .map_err(|e| bad(format!("flops: {e}")))?
        .unwrap_or(0);
    Ok(LinearOracle::new(labels, weights, bias)?.with_flops(flops))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_builtin_forms() {
        assert_eq!(
            PredictorSpec::parse("region:m.png:0.5").unwrap(),
            PredictorSpec::Region {
                mask: "m.png".into(),
                sensitivity: 0.5
            }
        );
        assert_eq!(
            PredictorSpec::parse("region:m.png").unwrap(),
            PredictorSpec::Region {
                mask: "m.png".into(),
                sensitivity: 1.0
            }
        );
        assert_eq!(
            PredictorSpec::parse("slow:10:linear:w.txt").unwrap(),
            PredictorSpec::Slow {
                delay_ms: 10,
                inner: Box::new(PredictorSpec::Linear {
                    file: "w.txt".into()
                })
            }
        );
        assert_eq!(
            PredictorSpec::parse("http://127.0.0.1:8731").unwrap(),
            PredictorSpec::Http {
                url: "http://127.0.0.1:8731".into()
            }
        );
    }

    #[test]
    fn rejects_malformed() {
        for s in [
            "",
            "region",
            "region:",
            "magic:x",
            "slow:abc:region:m.png",
            "slow:5",
        ] {
            assert!(PredictorSpec::parse(s).is_err(), "{s}");
        }
    }
}
