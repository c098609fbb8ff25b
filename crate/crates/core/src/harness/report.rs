use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::loss::LossMode;
use crate::net::EpochRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub loss: LossMode,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixError {
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub anchors: Vec<usize>,
    pub anchor_scores: Vec<f64>,
    pub condition_estimate: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Outcome of one run. Wall-clock timings are kept out of the serialised
/// report so repeated runs produce identical bytes; they go to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub class_count: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub stages: Vec<StageReport>,
    pub test_accuracy: f64,
    pub t_truth: Vec<Vec<f64>>,
    pub t_used: Option<Vec<Vec<f64>>>,
    pub t_hat: Option<Vec<Vec<f64>>>,
    pub t_hat_error: Option<MatrixError>,
    pub estimator: Option<EstimatorSummary>,
    pub test_label_checksum_before: String,
    pub test_label_checksum_after: String,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn timings_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.timings)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
