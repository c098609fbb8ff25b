use std::path::Path;
use std::time::Instant;

use super::config::{derive_seed, DataSource, ExperimentConfig, TSource};
use super::report::{EstimatorSummary, ExperimentReport, MatrixError, StageReport, StageTiming};
use crate::data::{load_idx, GaussianMixture, LabeledDataset};
use crate::error::{Error, Result};
use crate::estimator::{collect_scores, estimate, matrix_errors, EstimatedT};
use crate::loss::{CorrectedLoss, LossMode};
use crate::net::{clean_accuracy, train, MlpNetwork, OptimizerState, TrainConfig, TrainOutcome};
use crate::noise::NoiseMatrix;

const SEED_TRAIN_DATA: u64 = 1;
const SEED_TEST_DATA: u64 = 2;
const SEED_SUBSET: u64 = 3;
const SEED_CORRUPT: u64 = 4;
const SEED_STAGE1_INIT: u64 = 5;
const SEED_STAGE1_TRAIN: u64 = 6;
const SEED_STAGE2_INIT: u64 = 7;
const SEED_STAGE2_TRAIN: u64 = 8;

/// Loaded data with training labels already corrupted.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub truth: NoiseMatrix,
    pub mixture: Option<GaussianMixture>,
    pub test_checksum_before: String,
}

/// Everything a run produced, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub network: MlpNetwork,
    pub stage1_network: Option<MlpNetwork>,
    pub estimate: Option<EstimatedT>,
}

fn load(config: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset, Option<GaussianMixture>)> {
    match &config.data {
        &DataSource::Synthetic {
            classes,
            per_class,
            dim,
            separation,
            test_per_class,
        } => {
            let mixture = GaussianMixture::simplex(classes, dim, separation)?;
            let train = mixture.sample(per_class, derive_seed(config.seed, SEED_TRAIN_DATA));
            let test = mixture.sample(test_per_class, derive_seed(config.seed, SEED_TEST_DATA));
            Ok((train, test, Some(mixture)))
        }
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_subset,
        } => {
            let mut train = load_idx(train_images, train_labels)?;
            if let Some(n) = *train_subset {
                train = train.shuffled_subset(n, derive_seed(config.seed, SEED_SUBSET));
            }
            let test = load_idx(test_images, test_labels)?;
            Ok((train, test, None))
        }
        DataSource::Csv {
            train,
            test,
            class_count,
        } => {
            let a = LabeledDataset::read_csv(train, *class_count)?;
            let b = LabeledDataset::read_csv(test, *class_count)?;
            let c = a.class_count().max(b.class_count());
            let widen = |d: LabeledDataset| {
                LabeledDataset::new(d.features().clone(), d.clean_labels().to_vec(), c)
            };
            let (a, b) = (widen(a)?, widen(b)?);
            if a.dim() != b.dim() {
                return Err(Error::Dimension(format!(
                    "train has {} features, test has {}",
                    a.dim(),
                    b.dim()
                )));
            }
            Ok((a, b, None))
        }
    }
}

/// Load and split data, then corrupt the training labels. Test labels stay clean.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let (mut train, test, mixture) = load(config).map_err(|e| e.in_stage("load"))?;
    let test_checksum_before = test.clean_label_checksum();
    let truth = config
        .noise
        .build(train.class_count())
        .and_then(|t| {
            train.corrupt(&t, derive_seed(config.seed, SEED_CORRUPT))?;
            Ok(t)
        })
        .map_err(|e| e.in_stage("corrupt"))?;
    Ok(PreparedData {
        train,
        test,
        truth,
        mixture,
        test_checksum_before,
    })
}

/// Builds the loss, turning a singular backward matrix into an actionable error.
pub fn corrected_loss(mode: LossMode, t: Option<NoiseMatrix>, identity_mix: f64) -> Result<CorrectedLoss> {
    CorrectedLoss::new(mode, t, identity_mix).map_err(|e| match e {
        Error::SingularMatrix { condition } => Error::SingularCorrection { condition },
        other => other,
    })
}

fn stage_train_config(base: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..base.clone()
    }
}

fn fresh_network(config: &ExperimentConfig, data: &LabeledDataset, seed: u64) -> Result<MlpNetwork> {
    let dims = config.network.layer_dims(data.dim(), data.class_count());
    Ok(MlpNetwork::init(&dims, config.train.init, seed)?
        .with_activation(config.network.activation)
        .with_dropout(config.network.dropout)?)
}

/// Trains one network on the noisy training labels.
pub fn train_network(
    config: &ExperimentConfig,
    data: &LabeledDataset,
    loss: &CorrectedLoss,
    train_config: &TrainConfig,
    start: Option<MlpNetwork>,
    init_seed: u64,
) -> Result<TrainOutcome> {
    let net = match start {
        Some(n) => n,
        None => fresh_network(config, data, init_seed)?,
    };
    let mut opt = OptimizerState::new(config.optimizer, &net)?;
    train(net, data, loss, &mut opt, train_config)
}

/// Stage 1 and estimation: plain training, softmax scores over all training
/// features, anchor-point `T̂`.
pub fn estimate_stage(
    config: &ExperimentConfig,
    data: &LabeledDataset,
) -> Result<(TrainOutcome, EstimatedT)> {
    let tc = stage_train_config(config.stage1(), derive_seed(config.seed, SEED_STAGE1_TRAIN));
    let outcome = train_network(
        config,
        data,
        &CorrectedLoss::plain(),
        &tc,
        None,
        derive_seed(config.seed, SEED_STAGE1_INIT),
    )
    .map_err(|e| e.in_stage("stage1"))?;
    let est = collect_scores(&outcome.network, data.features())
        .and_then(|scores| estimate(&scores, &config.estimator))
        .map_err(|e| e.in_stage("estimate"))?;
    Ok((outcome, est))
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    out
}

/// The two-stage robust training procedure end to end.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let mut timings = Vec::new();
    let prepared = timed(&mut timings, "prepare", || prepare(config))?;
    let PreparedData {
        train: data,
        test,
        truth,
        test_checksum_before,
        ..
    } = prepared;

    let mut stages = Vec::new();
    let mut stage1_network = None;
    let mut estimated = None;
    if config.t_source == TSource::Estimate {
        let (outcome, est) = timed(&mut timings, "stage1", || estimate_stage(config, &data))?;
        stages.push(StageReport {
            name: "stage1".into(),
            loss: LossMode::Plain,
            history: outcome.history.epochs,
        });
        stage1_network = Some(outcome.network);
        estimated = Some(est);
    }

    let t_used = match (&config.t_source, config.loss) {
        (_, LossMode::Plain) => None,
        (TSource::Truth, _) => Some(truth.clone()),
        (TSource::Estimate, _) => estimated.as_ref().map(|e| e.matrix.clone()),
        (TSource::File(p), _) => {
            let t = NoiseMatrix::read_csv(p).map_err(|e| e.in_stage("load_t"))?;
            if t.classes() != data.class_count() {
                return Err(Error::Dimension(format!(
                    "T file has {} classes, data has {}",
                    t.classes(),
                    data.class_count()
                ))
                .in_stage("load_t"));
            }
            Some(t)
        }
    };
    let loss = corrected_loss(config.loss, t_used.clone(), config.identity_mix)
        .map_err(|e| e.in_stage("correct"))?;

    let start = if config.warm_start {
        stage1_network.clone()
    } else {
        None
    };
    let tc = stage_train_config(&config.train, derive_seed(config.seed, SEED_STAGE2_TRAIN));
    let outcome = timed(&mut timings, "stage2", || {
        train_network(
            config,
            &data,
            &loss,
            &tc,
            start,
            derive_seed(config.seed, SEED_STAGE2_INIT),
        )
        .map_err(|e| e.in_stage("stage2"))
    })?;
    stages.push(StageReport {
        name: "stage2".into(),
        loss: config.loss,
        history: outcome.history.epochs,
    });

    let test_accuracy = timed(&mut timings, "evaluate", || {
        clean_accuracy(&outcome.network, &test).map_err(|e| e.in_stage("evaluate"))
    })?;

    let report = ExperimentReport {
        config: config.clone(),
        class_count: data.class_count(),
        train_examples: data.len(),
        test_examples: test.len(),
        stages,
        test_accuracy,
        t_truth: truth.matrix().to_rows(),
        t_used: t_used.map(|t| t.matrix().to_rows()),
        t_hat: estimated.as_ref().map(|e| e.matrix.matrix().to_rows()),
        t_hat_error: estimated.as_ref().map(|e| {
            let (max_abs, mean_abs) = matrix_errors(e.matrix.matrix(), truth.matrix());
            MatrixError { max_abs, mean_abs }
        }),
        estimator: estimated.as_ref().map(|e| EstimatorSummary {
            anchors: e.anchors.clone(),
            anchor_scores: e.anchor_scores.clone(),
            condition_estimate: e.condition_estimate,
            warnings: e.warnings.clone(),
        }),
        test_label_checksum_before: test_checksum_before,
        test_label_checksum_after: test.clean_label_checksum(),
        timings,
    };
    Ok(RunOutcome {
        report,
        network: outcome.network,
        stage1_network,
        estimate: estimated,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn history_csv(records: &[crate::net::EpochRecord]) -> String {
    crate::net::TrainHistory {
        epochs: records.to_vec(),
    }
    .to_csv()
}

impl RunOutcome {
    /// Writes `report.json`, per-stage history CSVs, matrices and checkpoints
    /// into `dir`, plus wall-clock timings in `timings.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.report.write_json(&dir.join("report.json"))?;
        write(&dir.join("timings.json"), &self.report.timings_json()?)?;
        for stage in &self.report.stages {
            write(
                &dir.join(format!("history_{}.csv", stage.name)),
                &history_csv(&stage.history),
            )?;
        }
        write(&dir.join("model.json"), &self.network.to_json()?)?;
        if let Some(net) = &self.stage1_network {
            write(&dir.join("model_stage1.json"), &net.to_json()?)?;
        }
        if let Some(est) = &self.estimate {
            est.write(dir, "t_hat", &self.report.config.estimator)?;
        }
        if let Some(rows) = &self.report.t_used {
            let t = NoiseMatrix::new(crate::linalg::DenseMatrix::from_rows(rows)?)?;
            t.write_csv(&dir.join("t_used.csv"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;

    fn small(loss: LossMode, noise: NoiseSpec) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            data: DataSource::Synthetic {
                classes: 3,
                per_class: 300,
                dim: 2,
                separation: 10.0,
                test_per_class: 200,
            },
            noise,
            loss,
            seed: 3,
            ..ExperimentConfig::default()
        };
        cfg.network.hidden = vec![16];
        cfg.train.epochs = 15;
        cfg.train.batch_size = 32;
        cfg.optimizer = crate::net::OptimizerKind::Adagrad {
            learning_rate: 0.1,
            delta: 1e-6,
        };
        cfg
    }

    #[test]
    fn separable_identity_noise_is_accurate() {
        let out = run(&small(LossMode::Plain, NoiseSpec::identity())).unwrap();
        assert!(out.report.test_accuracy >= 0.99, "{}", out.report.test_accuracy);
        assert_eq!(
            out.report.test_label_checksum_before,
            out.report.test_label_checksum_after
        );
        assert_eq!(out.report.stages.len(), 1);
        assert!(out.report.t_used.is_none());
    }

    #[test]
    fn forward_with_identity_truth_equals_plain() {
        let plain = run(&small(LossMode::Plain, NoiseSpec::symmetric(0.0))).unwrap();
        let fwd = run(&small(LossMode::Forward, NoiseSpec::symmetric(0.0))).unwrap();
        assert_eq!(plain.network, fwd.network);
        assert_eq!(plain.report.test_accuracy, fwd.report.test_accuracy);
        assert_eq!(plain.report.stages[0].history, fwd.report.stages[0].history);
    }

    #[test]
    fn estimate_path_reports_t_hat() {
        let mut cfg = small(LossMode::Forward, NoiseSpec::symmetric(0.2));
        cfg.t_source = TSource::Estimate;
        cfg.estimator = crate::estimator::EstimatorConfig::argmax();
        let out = run(&cfg).unwrap();
        assert_eq!(out.report.stages.len(), 2);
        let err = out.report.t_hat_error.unwrap();
        assert!(err.max_abs < 0.2, "{err:?}");
        assert_eq!(out.report.t_used, out.report.t_hat);
    }

    #[test]
    fn singular_backward_names_identity_mix() {
        let cfg = small(LossMode::Backward, NoiseSpec::pair_flip(0.5, &[(0, 1), (1, 0)]));
        let err = run(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("correct"), "{msg}");
        match err {
            Error::Stage { source, .. } => {
                assert!(matches!(*source, Error::SingularCorrection { .. }));
                assert!(source.to_string().contains("identity_mix"));
            }
            other => panic!("{other:?}"),
        }
        let mut cfg = cfg;
        cfg.identity_mix = 0.1;
        cfg.train.epochs = 1;
        assert!(run(&cfg).is_ok());
    }

    #[test]
    fn missing_idx_fails_in_config_stage() {
        let cfg = ExperimentConfig {
            data: DataSource::mnist(Path::new("/nonexistent"), Some(10)),
            ..ExperimentConfig::default()
        };
        match run(&cfg) {
            Err(Error::Stage { stage, .. }) => assert_eq!(stage, "config"),
            other => panic!("{other:?}"),
        }
    }
}
