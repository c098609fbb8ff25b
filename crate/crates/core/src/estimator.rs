//! Anchor-point estimation of the transition matrix from a noisy-label model.
//!
//! For each class `i` an anchor row of `X′` is chosen by its score for class `i`
//! (the maximum, or an α-percentile), and that row's full softmax output becomes
//! row `i` of the estimate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{softmax_in_place, solve_or_invert, DenseMatrix};
use crate::net::MlpNetwork;
use crate::noise::{row_normalize, NoiseMatrix};

pub const SIMPLEX_TOL: f64 = 1e-6;
pub const WEAK_ANCHOR_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Argmax,
    #[default]
    Percentile,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(EstimatorMode::Argmax),
            "percentile" => Ok(EstimatorMode::Percentile),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator mode `{other}`"
            ))),
        }
    }
}

fn default_alpha() -> f64 {
    0.97
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub mode: EstimatorMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_true")]
    pub row_normalize: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            mode: EstimatorMode::Percentile,
            alpha: default_alpha(),
            row_normalize: true,
        }
    }
}

impl EstimatorConfig {
    pub fn argmax() -> Self {
        Self {
            mode: EstimatorMode::Argmax,
            ..Self::default()
        }
    }

    pub fn percentile(alpha: f64) -> Self {
        Self {
            mode: EstimatorMode::Percentile,
            alpha,
            row_normalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedT {
    pub matrix: NoiseMatrix,
    pub anchors: Vec<usize>,
    pub anchor_scores: Vec<f64>,
    /// `‖T̂‖₁·‖T̂⁻¹‖₁`, or `None` when `T̂` is singular.
    pub condition_estimate: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    anchors: Vec<usize>,
    anchor_scores: Vec<f64>,
    condition_estimate: Option<f64>,
    config: EstimatorConfig,
    warnings: Vec<String>,
}

impl EstimatedT {
    pub fn sidecar_json(&self, config: &EstimatorConfig) -> Result<String> {
        let sidecar = Sidecar {
            anchors: self.anchors.clone(),
            anchor_scores: self.anchor_scores.clone(),
            condition_estimate: self.condition_estimate,
            config: *config,
            warnings: self.warnings.clone(),
        };
        Ok(serde_json::to_string_pretty(&sidecar)? + "\n")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, config: &EstimatorConfig) -> Result<()> {
        self.matrix.write_csv(&dir.join(format!("{stem}.csv")))?;
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, self.sidecar_json(config)?).map_err(|e| Error::io(&path, e))
    }

    /// Largest and mean absolute entry error against a reference matrix.
    pub fn error_against(&self, truth: &NoiseMatrix) -> (f64, f64) {
        matrix_errors(self.matrix.matrix(), truth.matrix())
    }
}

pub fn matrix_errors(a: &DenseMatrix, b: &DenseMatrix) -> (f64, f64) {
    let diffs: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .collect();
    let max = diffs.iter().copied().fold(0.0, f64::max);
    (max, diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Row of the anchor for class `class` under `config`.
fn select_anchor(scores: &DenseMatrix, class: usize, config: &EstimatorConfig) -> usize {
    let n = scores.rows();
    match config.mode {
        EstimatorMode::Argmax => {
            let mut best = 0;
            for r in 1..n {
                if scores.get(r, class) > scores.get(best, class) {
                    best = r;
                }
            }
            best
        }
        EstimatorMode::Percentile => {
            // Ascending by score; equal scores place the lower row index later,
            // so among ties the lower index is reached first from the top and
            // α = 1 always agrees with argmax.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                scores
                    .get(a, class)
                    .total_cmp(&scores.get(b, class))
                    .then(b.cmp(&a))
            });
            let pos = ((config.alpha * n as f64).ceil() as usize).clamp(1, n) - 1;
            order[pos]
        }
    }
}

/// Estimates `T̂` from softmax scores over `X′` (one row per example).
pub fn estimate(scores: &DenseMatrix, config: &EstimatorConfig) -> Result<EstimatedT> {
    config.validate()?;
    let (n, c) = (scores.rows(), scores.cols());
    if c == 0 || n < c {
        return Err(Error::InvalidArgument(format!(
            "need at least as many score rows as classes, got {n}x{c}"
        )));
    }
    for r in 0..n {
        let row = scores.row(r);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&v| v < -SIMPLEX_TOL) {
            return Err(Error::InvalidArgument(format!(
                "score row {r} is not a probability vector"
            )));
        }
    }

    let mut anchors = Vec::with_capacity(c);
    let mut anchor_scores = Vec::with_capacity(c);
    let mut raw = DenseMatrix::zeros(c, c);
    let mut warnings = Vec::new();
    for i in 0..c {
        let a = select_anchor(scores, i, config);
        let score = scores.get(a, i);
        if score < WEAK_ANCHOR_SCORE {
            warnings.push(format!(
                "weak anchor for class {i}: score {score:.4} at row {a}"
            ));
        }
        for j in 0..c {
            raw.set(i, j, scores.get(a, j).max(0.0));
        }
        anchors.push(a);
        anchor_scores.push(score);
    }
    let matrix = if config.row_normalize {
        row_normalize(&raw)?
    } else {
        NoiseMatrix::new(raw)?
    };
    let condition_estimate = solve_or_invert(matrix.matrix()).ok().map(|inv| inv.condition);
    Ok(EstimatedT {
        matrix,
        anchors,
        anchor_scores,
        condition_estimate,
        warnings,
    })
}

/// Inference-mode softmax outputs of `net` on every row of `features`.
pub fn collect_scores(net: &MlpNetwork, features: &DenseMatrix) -> Result<DenseMatrix> {
    let logits = net.predict_logits(features)?;
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = logits.as_slice().to_vec();
    for row in out.chunks_exact_mut(c) {
        softmax_in_place(row);
    }
    Ok(DenseMatrix::from_vec_unchecked(n, c, out))
}
