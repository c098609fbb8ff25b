use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    /// Smooth activation; only used as a control in curvature experiments.
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// He normal for weights feeding an activation, uniform ±0.05 for the linear readout.
    #[default]
    HeRelu,
    /// Uniform ±0.05 everywhere.
    Uniform,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "he_relu" | "he" => Ok(InitScheme::HeRelu),
            "uniform" | "uniform_pm_0.05" => Ok(InitScheme::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown init `{other}`"))),
        }
    }
}

pub const UNIFORM_INIT_BOUND: f64 = 0.05;

/// Dense feed-forward network: activation on every hidden layer, linear readout.
///
/// Weights are stored `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    layer_dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<DenseVector>,
    #[serde(default)]
    activation: Activation,
    #[serde(default)]
    dropout_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<InitRecord>,
}

/// How a network's parameters were first drawn; kept in checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitRecord {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl MlpNetwork {
    pub fn init(layer_dims: &[usize], init: InitScheme, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "a network needs at least input and output dims".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = Uniform::new_inclusive(-UNIFORM_INIT_BOUND, UNIFORM_INIT_BOUND);
        let last = layer_dims.len() - 2;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let entries: Vec<f64> = match init {
                InitScheme::HeRelu if l < last => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                        .expect("positive std");
                    (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect()
                }
                _ => (0..fan_in * fan_out).map(|_| uniform.sample(&mut rng)).collect(),
            };
            weights.push(DenseMatrix::from_vec_unchecked(fan_out, fan_in, entries));
            biases.push(DenseVector::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
            dropout_prob: 0.0,
            init: Some(InitRecord { scheme: init, seed }),
        })
    }

    pub fn from_parts(
        weights: Vec<DenseMatrix>,
        biases: Vec<DenseVector>,
        activation: Activation,
        dropout_prob: f64,
    ) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::InvalidArgument("no layers".into()))?;
        let mut layer_dims = vec![first.cols()];
        for w in &weights {
            layer_dims.push(w.rows());
        }
        let net = Self {
            layer_dims,
            weights,
            biases,
            activation,
            dropout_prob,
            init: None,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layer_dims.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(Error::Dimension("layer count mismatch".into()));
        }
        for l in 0..n - 1 {
            let w = &self.weights[l];
            if w.rows() != self.layer_dims[l + 1]
                || w.cols() != self.layer_dims[l]
                || self.biases[l].dim() != self.layer_dims[l + 1]
            {
                return Err(Error::Dimension(format!("layer {l} shape mismatch")));
            }
            if w.as_slice().iter().any(|v| !v.is_finite())
                || self.biases[l].as_slice().iter().any(|v| !v.is_finite())
            {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_prob
            )));
        }
        Ok(())
    }

    pub fn with_dropout(mut self, p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        self.dropout_prob = p;
        Ok(self)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[DenseVector] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dropout_prob(&self) -> f64 {
        self.dropout_prob
    }

    pub fn init_record(&self) -> Option<InitRecord> {
        self.init
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.dim())
            .sum()
    }

    /// Parameter tensors in flat order: `W⁽¹⁾, b⁽¹⁾, W⁽²⁾, b⁽²⁾, …`.
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for l in 0..self.weights.len() {
            let nw = self.weights[l].as_slice().len();
            if index < nw {
                return (l, true, index);
            }
            index -= nw;
            let nb = self.biases[l].dim();
            if index < nb {
                return (l, false, index);
            }
            index -= nb;
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, index: usize) -> f64 {
        match self.locate(index) {
            (l, true, i) => self.weights[l].as_slice()[i],
            (l, false, i) => self.biases[l].as_slice()[i],
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (l, true, i) => self.weights[l].as_mut_slice()[i] = value,
            (l, false, i) => self.biases[l].as_mut_slice()[i] = value,
        }
    }

    /// Layer index owning the flat parameter `index`.
    pub fn param_layer(&self, index: usize) -> usize {
        self.locate(index).0
    }

    /// Runs one example. `rng` enables training-mode dropout.
    pub fn forward(
        &self,
        x: &DenseVector,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(DenseVector, ForwardCache)> {
        if x.dim() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input of dim {} for a network expecting {}",
                x.dim(),
                self.input_dim()
            )));
        }
        let mut ws = Workspace::new(self, 1);
        self.forward_batch(x.as_slice(), &mut ws, rng);
        let logits = DenseVector::from_vec_unchecked(ws.logits().to_vec());
        Ok((logits, ForwardCache { ws }))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_logits: &DenseVector) -> Result<Gradients> {
        if cache.ws.batch != 1 || grad_logits.dim() != self.output_dim() {
            return Err(Error::Dimension("cache/gradient shape mismatch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut ws = cache.ws.clone();
        self.backward_batch(&mut ws, grad_logits.as_slice(), &mut grads);
        Ok(grads)
    }

    /// Inference-mode logits for one example.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(self, 1);
        self.forward_batch(x, &mut ws, None);
        ws.logits().to_vec()
    }

    /// Inference-mode logits for every row of `features`, as an `n × c` matrix.
    pub fn predict_logits(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        if features.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "features have {} columns, network expects {}",
                features.cols(),
                self.input_dim()
            )));
        }
        const CHUNK: usize = 256;
        let c = self.output_dim();
        let d = self.input_dim();
        let n = features.rows();
        let mut out = Vec::with_capacity(n * c);
        let mut ws = Workspace::new(self, CHUNK.min(n.max(1)));
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            ws.resize(self, end - start);
            self.forward_batch(&features.as_slice()[start * d..end * d], &mut ws, None);
            out.extend_from_slice(ws.logits());
        }
        Ok(DenseMatrix::from_vec_unchecked(n, c, out))
    }

    /// Forward pass over a row-major batch held in `input`.
    pub(crate) fn forward_batch(
        &self,
        input: &[f64],
        ws: &mut Workspace,
        mut rng: Option<&mut dyn RngCore>,
    ) {
        let b = ws.batch;
        assert_eq!(input.len(), b * self.input_dim());
        ws.acts[0].copy_from_slice(input);
        let last = self.num_layers() - 1;
        let dropout = self.dropout_prob > 0.0 && rng.is_some();
        let keep_scale = 1.0 / (1.0 - self.dropout_prob);
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let (lower, upper) = ws.acts.split_at_mut(l + 1);
            let a_in = &lower[l];
            let z = &mut ws.pre[l];
            // Z = A · Wᵀ
            gemm(
                b,
                fan_in,
                fan_out,
                a_in,
                (fan_in, 1),
                self.weights[l].as_slice(),
                (1, fan_in),
                z,
                (fan_out, 1),
                0.0,
            );
            let bias = self.biases[l].as_slice();
            for row in z.chunks_exact_mut(fan_out) {
                for (v, bb) in row.iter_mut().zip(bias) {
                    *v += bb;
                }
            }
            let a_out = &mut upper[0];
            if l == last {
                a_out.copy_from_slice(z);
                continue;
            }
            match self.activation {
                Activation::Relu => {
                    for (a, &zz) in a_out.iter_mut().zip(z.iter()) {
                        *a = if zz > 0.0 { zz } else { 0.0 };
                    }
                }
                Activation::Sigmoid => {
                    for (a, &zz) in a_out.iter_mut().zip(z.iter()) {
                        *a = 1.0 / (1.0 + (-zz).exp());
                    }
                }
            }
            let mask = &mut ws.masks[l];
            if dropout {
                let rng = rng.as_deref_mut().expect("checked above");
                for (m, a) in mask.iter_mut().zip(a_out.iter_mut()) {
                    *m = if rng.gen::<f64>() < self.dropout_prob {
                        0.0
                    } else {
                        keep_scale
                    };
                    *a *= *m;
                }
                ws.masked[l] = true;
            } else {
                ws.masked[l] = false;
            }
        }
    }

    /// Backpropagates `grad_logits` (row-major, batch × c) into `grads`, overwriting them.
    pub(crate) fn backward_batch(
        &self,
        ws: &mut Workspace,
        grad_logits: &[f64],
        grads: &mut Gradients,
    ) {
        let b = ws.batch;
        let n = self.num_layers();
        assert_eq!(grad_logits.len(), b * self.output_dim());
        ws.delta[n - 1].copy_from_slice(grad_logits);
        for l in (0..n).rev() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if l < n - 1 {
                // delta[l] currently holds dL/dA for this layer's output
                let z = &ws.pre[l];
                let delta = &mut ws.delta[l];
                if ws.masked[l] {
                    for (d, m) in delta.iter_mut().zip(&ws.masks[l]) {
                        *d *= m;
                    }
                }
                match self.activation {
                    Activation::Relu => {
                        for (d, &zz) in delta.iter_mut().zip(z) {
                            if zz <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                    Activation::Sigmoid => {
                        for (d, &zz) in delta.iter_mut().zip(z) {
                            let s = 1.0 / (1.0 + (-zz).exp());
                            *d *= s * (1.0 - s);
                        }
                    }
                }
            }
            let delta = &ws.delta[l];
            // dW = deltaᵀ · A_in
            gemm(
                fan_out,
                b,
                fan_in,
                delta,
                (1, fan_out),
                &ws.acts[l],
                (fan_in, 1),
                grads.weights[l].as_mut_slice(),
                (fan_in, 1),
                0.0,
            );
            let db = grads.biases[l].as_mut_slice();
            db.iter_mut().for_each(|v| *v = 0.0);
            for row in delta.chunks_exact(fan_out) {
                for (acc, d) in db.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            if l > 0 {
                let (lower, upper) = ws.delta.split_at_mut(l);
                // dA_in = delta · W
                gemm(
                    b,
                    fan_out,
                    fan_in,
                    &upper[0],
                    (fan_out, 1),
                    self.weights[l].as_slice(),
                    (fan_in, 1),
                    &mut lower[l - 1],
                    (fan_in, 1),
                    0.0,
                );
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: MlpNetwork = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

/// `C = A·B + beta·C` for an `m × k` by `k × n` product with explicit (row, col) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    c_strides: (usize, usize),
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        (rows - 1) * rs + (cols - 1) * cs + 1
    };
    if k > 0 {
        assert!(a.len() >= span(m, k, a_strides));
        assert!(b.len() >= span(k, n, b_strides));
    }
    assert!(c.len() >= span(m, n, c_strides));
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

/// Per-layer buffers for a batch: inputs, pre-activations, dropout masks, deltas.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub(crate) batch: usize,
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    masked: Vec<bool>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(net: &MlpNetwork, batch: usize) -> Self {
        let dims = net.layer_dims();
        Self {
            batch,
            acts: dims.iter().map(|&d| vec![0.0; batch * d]).collect(),
            pre: dims[1..].iter().map(|&d| vec![0.0; batch * d]).collect(),
            masks: dims[1..].iter().map(|&d| vec![1.0; batch * d]).collect(),
            masked: vec![false; dims.len() - 1],
            delta: dims[1..].iter().map(|&d| vec![0.0; batch * d]).collect(),
        }
    }

    pub(crate) fn resize(&mut self, net: &MlpNetwork, batch: usize) {
        if batch != self.batch {
            *self = Workspace::new(net, batch);
        }
    }

    pub(crate) fn logits(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }

    /// Pre-activations of hidden layer `l` for the whole batch.
    pub(crate) fn pre_activations(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }
}

/// State recorded by [`MlpNetwork::forward`] for a matching [`MlpNetwork::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ws: Workspace,
}

impl ForwardCache {
    /// Hidden-layer pre-activations, one vector per hidden layer.
    pub fn hidden_pre_activations(&self) -> Vec<&[f64]> {
        let hidden = self.ws.pre.len() - 1;
        (0..hidden).map(|l| self.ws.pre_activations(l)).collect()
    }

    pub fn hidden_outputs(&self) -> Vec<&[f64]> {
        let n = self.ws.acts.len();
        self.ws.acts[1..n - 1].iter().map(Vec::as_slice).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<DenseVector>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net
                .weights()
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases().iter().map(|b| DenseVector::zeros(b.dim())).collect(),
        }
    }

    /// Same flat order as the network parameters.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out
    }
}
