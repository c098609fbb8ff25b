//! Cross-entropy and its backward (`T⁻¹·ℓ`) and forward (`−log Tᵀp`) corrections.
//!
//! All values are computed from logits in log space, so plain, backward and
//! forward modes agree bit-for-bit when `T = I`. Probabilities are clamped at
//! [`PROB_FLOOR`] before any logarithm, i.e. per-class losses are capped at
//! `−ln 1e-12 ≈ 27.63`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, softmax_slice, DenseMatrix, DenseVector};
use crate::noise::NoiseMatrix;

pub const PROB_FLOOR: f64 = 1e-12;

fn loss_cap() -> f64 {
    -PROB_FLOOR.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Plain,
    Backward,
    Forward,
}

impl std::str::FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "cross_entropy" => Ok(LossMode::Plain),
            "backward" => Ok(LossMode::Backward),
            "forward" => Ok(LossMode::Forward),
            other => Err(Error::InvalidArgument(format!("unknown loss mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Plain => "plain",
            LossMode::Backward => "backward",
            LossMode::Forward => "forward",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad_logits: DenseVector,
}

#[derive(Debug, Clone)]
pub struct CorrectedLoss {
    mode: LossMode,
    noise: Option<NoiseMatrix>,
    inverse: Option<DenseMatrix>,
    identity_mix: f64,
    // ln T[j][y], column-major by noisy label y; forward mode only
    log_columns: Vec<Vec<(usize, f64)>>,
}

impl CorrectedLoss {
    pub fn plain() -> Self {
        Self {
            mode: LossMode::Plain,
            noise: None,
            inverse: None,
            identity_mix: 0.0,
            log_columns: Vec::new(),
        }
    }

    pub fn backward(noise: NoiseMatrix, identity_mix: f64) -> Result<Self> {
        let inverse = noise.inverse(identity_mix)?;
        Ok(Self {
            mode: LossMode::Backward,
            noise: Some(noise),
            inverse: Some(inverse),
            identity_mix,
            log_columns: Vec::new(),
        })
    }

    pub fn forward(noise: NoiseMatrix) -> Self {
        let c = noise.classes();
        let log_columns = (0..c)
            .map(|y| {
                (0..c)
                    .filter(|&j| noise.get(j, y) > 0.0)
                    .map(|j| (j, noise.get(j, y).ln()))
                    .collect()
            })
            .collect();
        Self {
            mode: LossMode::Forward,
            noise: Some(noise),
            inverse: None,
            identity_mix: 0.0,
            log_columns,
        }
    }

    pub fn new(mode: LossMode, noise: Option<NoiseMatrix>, identity_mix: f64) -> Result<Self> {
        match (mode, noise) {
            (LossMode::Plain, _) => Ok(Self::plain()),
            (LossMode::Backward, Some(t)) => Self::backward(t, identity_mix),
            (LossMode::Forward, Some(t)) => Ok(Self::forward(t)),
            (mode, None) => Err(Error::InvalidArgument(format!(
                "{mode} correction needs a noise matrix"
            ))),
        }
    }

    pub fn mode(&self) -> LossMode {
        self.mode
    }

    pub fn noise(&self) -> Option<&NoiseMatrix> {
        self.noise.as_ref()
    }

    pub fn inverse(&self) -> Option<&DenseMatrix> {
        self.inverse.as_ref()
    }

    pub fn identity_mix(&self) -> f64 {
        self.identity_mix
    }

    /// Number of classes the loss is bound to, if any.
    pub fn classes(&self) -> Option<usize> {
        self.noise.as_ref().map(NoiseMatrix::classes)
    }

    pub fn evaluate(&self, label: usize, logits: &DenseVector) -> LossEval {
        let mut grad = vec![0.0; logits.dim()];
        let value = self.evaluate_into(label, logits.as_slice(), &mut grad);
        LossEval {
            value,
            grad_logits: DenseVector::from_vec_unchecked(grad),
        }
    }

    /// Writes the gradient with respect to `logits` into `grad` and returns the loss.
    ///
    /// Panics if `label` or the logit length do not match the loss.
    pub fn evaluate_into(&self, label: usize, logits: &[f64], grad: &mut [f64]) -> f64 {
        let c = logits.len();
        assert!(label < c, "label {label} out of range for {c} logits");
        assert_eq!(grad.len(), c);
        if let Some(k) = self.classes() {
            assert_eq!(k, c, "loss built for {k} classes, got {c} logits");
        }
        let lse = lse_slice(logits);
        if !lse.is_finite() {
            grad.fill(f64::NAN);
            return f64::NAN;
        }
        match self.mode {
            LossMode::Plain => {
                let p = softmax_slice(logits);
                grad.copy_from_slice(&p);
                grad[label] -= 1.0;
                (lse - logits[label]).min(loss_cap())
            }
            LossMode::Backward => {
                let inv = self.inverse.as_ref().expect("backward loss has an inverse");
                let coeffs = inv.row(label);
                let p = softmax_slice(logits);
                let weight: f64 = coeffs.iter().sum();
                for k in 0..c {
                    grad[k] = weight * p[k] - coeffs[k];
                }
                coeffs
                    .iter()
                    .zip(logits)
                    .map(|(a, z)| a * (lse - z).min(loss_cap()))
                    .sum()
            }
            LossMode::Forward => {
                let column = &self.log_columns[label];
                // log q_y = lse_j(z_j + ln T[j][y]) − lse(z)
                let shifted_max = column
                    .iter()
                    .map(|&(j, lt)| logits[j] + lt)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for &(j, lt) in column {
                    total += (logits[j] + lt - shifted_max).exp();
                }
                let lse_noisy = shifted_max + total.ln();
                let p = softmax_slice(logits);
                grad.copy_from_slice(&p);
                for &(j, lt) in column {
                    grad[j] -= (logits[j] + lt - lse_noisy).exp();
                }
                (lse - lse_noisy).clamp(0.0, loss_cap())
            }
        }
    }
}

fn lse_slice(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-class cross-entropy `(−ln p₁, …, −ln p_c)` with probabilities floored at 1e-12.
pub fn loss_vector(p: &DenseVector) -> DenseVector {
    DenseVector::from_vec_unchecked(
        p.as_slice()
            .iter()
            .map(|&pi| -pi.max(PROB_FLOOR).ln())
            .collect(),
    )
}

/// Same as [`loss_vector`] but from logits, without forming probabilities.
pub fn loss_vector_from_logits(logits: &DenseVector) -> DenseVector {
    let lse = log_sum_exp(logits);
    DenseVector::from_vec_unchecked(
        logits
            .as_slice()
            .iter()
            .map(|z| (lse - z).min(loss_cap()))
            .collect(),
    )
}

/// `max_i |Σ_j T_ij (T⁻¹ℓ)_j − ℓ_i|`: how far the backward loss is from unbiased at `p`.
pub fn expected_clean_loss_check(noise: &NoiseMatrix, p: &DenseVector) -> Result<f64> {
    let c = noise.classes();
    if p.dim() != c {
        return Err(Error::Dimension(format!(
            "probability vector of dim {} for {c} classes",
            p.dim()
        )));
    }
    let ell = loss_vector(p);
    let inv = noise.inverse(0.0)?;
    let corrected = crate::linalg::matvec(&inv, &ell)?;
    let expected = crate::linalg::matvec(noise.matrix(), &corrected)?;
    Ok((0..c)
        .map(|i| (expected[i] - ell[i]).abs())
        .fold(0.0, f64::max))
}
