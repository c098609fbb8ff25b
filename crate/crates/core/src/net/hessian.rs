//! Finite-difference curvature probes over a small block of parameters.

use super::network::MlpNetwork;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::loss::CorrectedLoss;

pub const MAX_PROBE_PARAMS: usize = 50;
pub const DEFAULT_PROBE_STEP: f64 = 1e-4;

/// A loss paired with the label it is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct LabeledLoss<'a> {
    pub loss: &'a CorrectedLoss,
    pub label: usize,
}

impl<'a> LabeledLoss<'a> {
    pub fn new(loss: &'a CorrectedLoss, label: usize) -> Self {
        Self { loss, label }
    }
}

fn subset_gradient(net: &MlpNetwork, x: &DenseVector, side: LabeledLoss<'_>, subset: &[usize]) -> Vec<f64> {
    let (logits, cache) = net.forward(x, None).expect("input dim checked");
    let eval = side.loss.evaluate(side.label, &logits);
    let g = net
        .backward(&cache, &eval.grad_logits)
        .expect("shapes match")
        .flatten();
    subset.iter().map(|&i| g[i]).collect()
}

/// Symmetrised central-difference Hessian of one loss over `subset`,
/// built from analytic gradients.
pub fn hessian_block(
    net: &MlpNetwork,
    x: &DenseVector,
    side: LabeledLoss<'_>,
    subset: &[usize],
    step: f64,
) -> Result<DenseMatrix> {
    if x.dim() != net.input_dim() {
        return Err(Error::Dimension("probe input".into()));
    }
    if subset.len() > MAX_PROBE_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_PROBE_PARAMS} probe parameters, got {}",
            subset.len()
        )));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= net.param_count()) {
        return Err(Error::InvalidArgument(format!("parameter index {bad} out of range")));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    // dropout never applies: forward runs in inference mode
    let k = subset.len();
    let mut h = DenseMatrix::zeros(k, k);
    let mut probe = net.clone();
    for (col, &j) in subset.iter().enumerate() {
        let theta = net.param(j);
        probe.set_param(j, theta + step);
        let gp = subset_gradient(&probe, x, side, subset);
        probe.set_param(j, theta - step);
        let gm = subset_gradient(&probe, x, side, subset);
        probe.set_param(j, theta);
        for row in 0..k {
            h.set(row, col, (gp[row] - gm[row]) / (2.0 * step));
        }
    }
    for r in 0..k {
        for c in 0..r {
            let avg = 0.5 * (h.get(r, c) + h.get(c, r));
            h.set(r, c, avg);
            h.set(c, r, avg);
        }
    }
    Ok(h)
}

/// `max |H_a − H_b|` between two losses' Hessian blocks at the current parameters.
pub fn hessian_probe(
    net: &MlpNetwork,
    x: &DenseVector,
    a: LabeledLoss<'_>,
    b: LabeledLoss<'_>,
    subset: &[usize],
    step: f64,
) -> Result<f64> {
    let ha = hessian_block(net, x, a, subset, step)?;
    let hb = hessian_block(net, x, b, subset, step)?;
    Ok(ha.max_abs_diff(&hb))
}
