//! Training classifiers under class-conditional label noise with backward and
//! forward loss correction, plus anchor-point estimation of the noise matrix.

pub mod data;
pub mod error;
pub mod estimator;
pub mod format;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod net;
pub mod noise;

pub use data::{load_idx, synthetic_gaussians, GaussianMixture, LabeledDataset, SyntheticGaussians};
pub use error::{Error, Result};
pub use estimator::{collect_scores, estimate, EstimatedT, EstimatorConfig, EstimatorMode};
pub use linalg::{DenseMatrix, DenseVector};
pub use loss::{CorrectedLoss, LossEval, LossMode};
pub use net::{MlpNetwork, OptimizerKind, OptimizerState, TrainConfig};
pub use noise::{NoiseKind, NoiseMatrix, NoiseSpec};
pub use harness::{run, sweep, ExperimentConfig, ExperimentReport, RunOutcome, SweepGrid, TSource};
