use serde::{Deserialize, Serialize};

use super::network::{Gradients, MlpNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `accum += g²; θ −= lr·g / (√accum + δ)`
    Adagrad { learning_rate: f64, delta: f64 },
    /// `v ← μ·v − lr·(g + λ·θ); θ ← θ + v`
    SgdMomentum {
        learning_rate: f64,
        momentum: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adagrad {
            learning_rate: 0.01,
            delta: 1e-6,
        }
    }
}

impl OptimizerKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Adagrad {
                learning_rate,
                delta,
            } => learning_rate > 0.0 && delta > 0.0,
            OptimizerKind::SgdMomentum {
                learning_rate,
                momentum,
                weight_decay,
            } => learning_rate > 0.0 && (0.0..1.0).contains(&momentum) && weight_decay >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad optimizer settings {self:?}")))
        }
    }
}

/// Optimizer settings plus one accumulator per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    accumulators: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, net: &MlpNetwork) -> Result<Self> {
        kind.validate()?;
        let accumulators = net
            .weights()
            .iter()
            .zip(net.biases())
            .flat_map(|(w, b)| [vec![0.0; w.as_slice().len()], vec![0.0; b.dim()]])
            .collect();
        Ok(Self { kind, accumulators })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accumulators
    }

    pub fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients) {
        let params = net.tensors_mut();
        let grads = grads.tensors();
        assert_eq!(params.len(), self.accumulators.len());
        for ((theta, g), acc) in params.into_iter().zip(grads).zip(&mut self.accumulators) {
            match self.kind {
                OptimizerKind::Adagrad {
                    learning_rate,
                    delta,
                } => {
                    for ((t, &gi), a) in theta.iter_mut().zip(g).zip(acc.iter_mut()) {
                        *a += gi * gi;
                        *t -= learning_rate * gi / (a.sqrt() + delta);
                    }
                }
                OptimizerKind::SgdMomentum {
                    learning_rate,
                    momentum,
                    weight_decay,
                } => {
                    for ((t, &gi), vel) in theta.iter_mut().zip(g).zip(acc.iter_mut()) {
                        *vel = momentum * *vel - learning_rate * (gi + weight_decay * *t);
                        *t += *vel;
                    }
                }
            }
        }
    }
}
