//! Overlap metrics, segmentation losses and the compute ledger.

use crate::error::{Error, Result};
use crate::types::{BinaryMask, FlopsLedger};

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize, usize)> {
    b.ensure_dims(a.width(), a.height())?;
    let (mut inter, mut na, mut nb) = (0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0, y != 0);
        inter += usize::from(x && y);
        na += usize::from(x);
        nb += usize::from(y);
    }
    Ok((inter, na, nb))
}

/// `2|A∩B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, na, nb) = overlap_counts(a, b)?;
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// `|A∩B| / |A∪B|`; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, na, nb) = overlap_counts(a, b)?;
    let union = na + nb - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Class-probability field over `n_pixels` pixels and `n_classes` classes,
/// stored class-major (`p[c * n_pixels + i]`), with one-hot ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityField {
    pub n_classes: usize,
    pub n_pixels: usize,
    pub p: Vec<f64>,
    pub g: Vec<f64>,
    pub epsilon: f64,
}

impl ProbabilityField {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn new(n_classes: usize, n_pixels: usize, p: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        let field = Self {
            n_classes,
            n_pixels,
            p,
            g,
            epsilon: Self::DEFAULT_EPSILON,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.n_classes * self.n_pixels;
        if self.n_classes == 0 || self.n_pixels == 0 || self.p.len() != len || self.g.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "probability field {}x{} with {} / {} entries",
                self.n_classes,
                self.n_pixels,
                self.p.len(),
                self.g.len()
            )));
        }
        for i in 0..self.n_pixels {
            let ps: f64 = (0..self.n_classes)
                .map(|c| self.p[c * self.n_pixels + i])
                .sum();
            if (ps - 1.0).abs() > 1e-6 {
                return Err(Error::OutOfRange(format!(
                    "pixel {i} probabilities sum to {ps}"
                )));
            }
            let mut ones = 0;
            for c in 0..self.n_classes {
                let v = self.g[c * self.n_pixels + i];
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return Err(Error::OutOfRange(format!("ground truth {v} is not binary")));
                }
            }
            if ones != 1 {
                return Err(Error::OutOfRange(format!(
                    "pixel {i} ground truth is not one-hot"
                )));
            }
        }
        Ok(())
    }
}

/// Multi-class soft Dice loss: `1 - 2 Σ p·g / (Σ (p + g) + ε)`, sums over all
/// classes and pixels with a single ε in the denominator.
pub fn dice_loss(f: &ProbabilityField) -> f64 {
    let overlap: f64 = f.p.iter().zip(&f.g).map(|(p, g)| p * g).sum();
    let mass: f64 = f.p.iter().zip(&f.g).map(|(p, g)| p + g).sum();
    1.0 - 2.0 * overlap / (mass + f.epsilon)
}

/// Categorical cross-entropy summed over pixels: `-Σ g·log(p)`, with `p`
/// clamped at 1e-12.
pub fn ce_loss(f: &ProbabilityField) -> f64 {
    -f.p.iter()
        .zip(&f.g)
        .filter(|(_, &g)| g != 0.0)
        .map(|(&p, &g)| g * p.max(1e-12).ln())
        .sum::<f64>()
}

pub fn total_loss(f: &ProbabilityField) -> f64 {
    dice_loss(f) + ce_loss(f)
}

pub fn ledger(roi_flops: u64, calls: u64, flops_per_call: u64) -> FlopsLedger {
    FlopsLedger {
        roi_flops,
        calls,
        flops_per_call,
        total: roi_flops + calls * flops_per_call,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(bits.len(), 1, bits.to_vec()).unwrap()
    }

    #[test]
    fn dice_and_iou_examples() {
        let a = mask(&[1, 1, 0, 0]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);

        let b = mask(&[0, 0, 1, 1]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);

        let c = mask(&[0, 1, 1, 0]);
        assert_eq!(dice(&a, &c).unwrap(), 0.5);
        assert!((iou(&a, &c).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_pair_convention() {
        let e = mask(&[0, 0]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&e, &mask(&[1, 0])).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        assert!(dice(&mask(&[1]), &mask(&[1, 0])).is_err());
    }

    #[test]
    fn losses_on_perfect_prediction() {
        let g = vec![1.0, 0.0, 0.0, 1.0];
        let f = ProbabilityField::new(2, 2, g.clone(), g).unwrap();
        assert!(dice_loss(&f).abs() < 1e-6);
        assert_eq!(ce_loss(&f), 0.0);
    }

    #[test]
    fn dice_loss_orthogonal_is_one() {
        let f = ProbabilityField::new(2, 2, vec![0.0, 1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap();
        assert!((dice_loss(&f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn field_validation() {
        assert!(ProbabilityField::new(2, 1, vec![0.7, 0.7], vec![1.0, 0.0]).is_err());
        assert!(ProbabilityField::new(2, 1, vec![0.5, 0.5], vec![1.0, 1.0]).is_err());
        assert!(ProbabilityField::new(2, 1, vec![0.5], vec![1.0]).is_err());
    }

    #[test]
    fn ledger_arithmetic() {
        assert_eq!(ledger(0, 36, 1_000_000_000).total, 36_000_000_000);
        assert_eq!(ledger(5_000_000_000, 0, 77).total, 5_000_000_000);
    }
}
