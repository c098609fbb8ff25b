use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, InitScheme, MlpNetwork, Workspace};
use super::optim::OptimizerState;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::linalg::argmax;
use crate::loss::CorrectedLoss;

fn default_batch_size() -> usize {
    128
}

fn default_validation_fraction() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: default_batch_size(),
            seed: 0,
            validation_fraction: default_validation_fraction(),
            init: InitScheme::HeRelu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Epoch with the lowest validation loss, if validation ran.
    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .filter(|r| r.val_loss.is_some())
            .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).expect("finite"))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch,
                fmt_f64(r.train_loss),
                opt(r.val_loss),
                opt(r.val_accuracy)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: MlpNetwork,
    pub history: TrainHistory,
}

/// Train/validation index split: one seeded shuffle, the last fraction held out.
pub fn split_train_validation(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let n_val = if n < 2 {
        0
    } else {
        ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
    };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Mean loss and accuracy against the noisy labels of `data` at `indices`.
pub fn evaluate_noisy(
    net: &MlpNetwork,
    data: &LabeledDataset,
    indices: &[usize],
    loss: &CorrectedLoss,
) -> (f64, f64) {
    if indices.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let subset = data.select(indices);
    let logits = net
        .predict_logits(subset.features())
        .expect("dimension checked by train");
    let c = net.output_dim();
    let mut grad = vec![0.0; c];
    let mut total = 0.0;
    let mut hits = 0usize;
    for (i, &y) in subset.noisy_labels().iter().enumerate() {
        let z = logits.row(i);
        total += loss.evaluate_into(y, z, &mut grad);
        if argmax(z) == y {
            hits += 1;
        }
    }
    let n = indices.len() as f64;
    (total / n, hits as f64 / n)
}

/// Accuracy of `net` against the clean labels of `data`.
pub fn clean_accuracy(net: &MlpNetwork, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let logits = net.predict_logits(data.features())?;
    let hits = data
        .clean_labels()
        .iter()
        .enumerate()
        .filter(|(i, &y)| argmax(logits.row(*i)) == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Minibatch training on the noisy labels of `data`.
///
/// Validation loss uses the same corrected loss on the held-out noisy split.
/// The final-epoch network is returned.
pub fn train(
    mut net: MlpNetwork,
    data: &LabeledDataset,
    loss: &CorrectedLoss,
    optimizer: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if data.dim() != net.input_dim() || data.class_count() != net.output_dim() {
        return Err(Error::Dimension(format!(
            "dataset {}→{} vs network {}→{}",
            data.dim(),
            data.class_count(),
            net.input_dim(),
            net.output_dim()
        )));
    }
    if let Some(k) = loss.classes() {
        if k != data.class_count() {
            return Err(Error::Dimension(format!(
                "{k}-class loss for a {}-class dataset",
                data.class_count()
            )));
        }
    }

    let (mut train_idx, val_idx) =
        split_train_validation(data.len(), config.validation_fraction, config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(3);

    let d = data.dim();
    let c = data.class_count();
    let bs = config.batch_size.min(train_idx.len());
    let mut ws = Workspace::new(&net, bs);
    let mut grads = Gradients::zeros_like(&net);
    let mut input = Vec::with_capacity(bs * d);
    let mut grad_logits = vec![0.0; bs * c];
    let labels = data.noisy_labels();
    let features = data.features();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for (batch_no, chunk) in train_idx.chunks(bs).enumerate() {
            let b = chunk.len();
            ws.resize(&net, b);
            input.clear();
            for &i in chunk {
                input.extend_from_slice(features.row(i));
            }
            net.forward_batch(&input, &mut ws, Some(&mut dropout_rng));
            let logits = ws.logits();
            let mut batch_total = 0.0;
            grad_logits.resize(b * c, 0.0);
            for (k, &i) in chunk.iter().enumerate() {
                let g = &mut grad_logits[k * c..(k + 1) * c];
                batch_total += loss.evaluate_into(labels[i], &logits[k * c..(k + 1) * c], g);
            }
            if !batch_total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            let scale = 1.0 / b as f64;
            grad_logits[..b * c].iter_mut().for_each(|g| *g *= scale);
            net.backward_batch(&mut ws, &grad_logits[..b * c], &mut grads);
            optimizer.step(&mut net, &grads);
            epoch_total += batch_total;
        }
        let (val_loss, val_acc) = if val_idx.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_noisy(&net, data, &val_idx, loss);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                });
            }
            (Some(l), Some(a))
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_total / train_idx.len() as f64,
            val_loss,
            val_accuracy: val_acc,
        });
    }
    Ok(TrainOutcome {
        network: net,
        history,
    })
}
