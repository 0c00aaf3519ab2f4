//! Dense feed-forward layers with a softmax cross-entropy head.
//!
//! A layer computes `f(x·W + b)` row-wise over a batch, with `W` stored
//! `in_dim x out_dim`. The last layer of a [`DnnModel`] emits logits (identity
//! activation) which feed [`softmax`]; the head gradient is the fused
//! `(probs - one_hot) / batch_size`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    #[serde(rename = "relu")]
    ReLU,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::ReLU => z.max(0.0),
            ActivationKind::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y = f(z)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => y * (1.0 - y),
            ActivationKind::Tanh => 1.0 - y * y,
            ActivationKind::ReLU => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Identity => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::ReLU => "relu",
            ActivationKind::Identity => "identity",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::ReLU),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(Error::ConfigInvalid(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in_dim x out_dim`
    pub weights: Tensor2,
    /// `1 x out_dim`
    pub bias: Tensor2,
    pub activation: ActivationKind,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, bias: Tensor2, activation: ActivationKind) -> Result<Self> {
        if bias.rows() != 1 || bias.cols() != weights.cols() {
            return Err(Error::DimensionMismatch(format!(
                "bias {:?} does not match weights {:?}",
                bias.shape(),
                weights.shape()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn glorot(in_dim: usize, out_dim: usize, activation: ActivationKind, seed: u64) -> Self {
        DenseLayer {
            weights: glorot_init(in_dim, out_dim, seed),
            bias: Tensor2::zeros(1, out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Pre-activation `x·W + b`.
    pub fn affine(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch(format!(
                "layer expects {} inputs, batch has {}",
                self.in_dim(),
                x.cols()
            )));
        }
        let mut z = x.matmul(&self.weights)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    /// Gradients of the loss with respect to `W`, `b` and the layer input,
    /// given the layer input `x`, its output `y` and `dL/dy`.
    pub fn backward(
        &self,
        x: &Tensor2,
        y: &Tensor2,
        grad_out: &Tensor2,
    ) -> Result<(Tensor2, Tensor2, Tensor2)> {
        let act = self.activation;
        let mut dz = grad_out.clone();
        if act != ActivationKind::Identity {
            dz.as_mut_slice()
                .iter_mut()
                .zip(y.as_slice())
                .for_each(|(g, &yv)| *g *= act.derivative_from_output(yv));
        }
        let dw = x.t_matmul(&dz)?;
        let db = dz.sum_rows();
        let dx = dz.matmul_t(&self.weights)?;
        Ok((dw, db, dx))
    }
}

/// `f(x·W + b)` applied row-wise.
pub fn dense_forward(layer: &DenseLayer, x: &Tensor2) -> Result<Tensor2> {
    let mut z = layer.affine(x)?;
    let act = layer.activation;
    if act != ActivationKind::Identity {
        z.map_inplace(|v| act.apply(v));
    }
    Ok(z)
}

/// Row-wise softmax, computed max-subtracted.
pub fn softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean over the batch of `-ln p[target]`.
pub fn cross_entropy_loss(probs: &Tensor2, targets: &[usize]) -> Result<f64> {
    check_targets(probs, targets)?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(r, &t)| -probs.get(r, t).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / targets.len() as f64)
}

/// Gradient of the mean cross-entropy with respect to the logits.
pub fn softmax_cross_entropy_grad(probs: &Tensor2, targets: &[usize]) -> Result<Tensor2> {
    check_targets(probs, targets)?;
    let mut g = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        let v = g.get(r, t);
        g.set(r, t, v - 1.0);
    }
    if !targets.is_empty() {
        g.scale(1.0 / targets.len() as f64);
    }
    Ok(g)
}

fn check_targets(probs: &Tensor2, targets: &[usize]) -> Result<()> {
    if probs.rows() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability rows for {} targets",
            probs.rows(),
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= probs.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "target {t} outside {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// Uniform on `±sqrt(6 / (in_dim + out_dim))`, deterministic per seed.
pub fn glorot_init(in_dim: usize, out_dim: usize, seed: u64) -> Tensor2 {
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..in_dim * out_dim)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor2::from_vec(in_dim, out_dim, data).expect("sized")
}

/// Derives an independent seed for the `index`-th parameter tensor.
pub(crate) fn sub_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stack of dense layers ending in a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnModel {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer activations kept for the backward pass; `outputs[0]` is the input.
pub struct DnnCache {
    outputs: Vec<Tensor2>,
    pub probs: Tensor2,
}

impl DnnModel {
    /// `dims = [input, hidden.., classes]`; hidden layers use `hidden`, the last
    /// layer emits logits.
    pub fn new(dims: &[usize], hidden: ActivationKind, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::ConfigInvalid(format!("bad layer dims {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    ActivationKind::Identity
                } else {
                    hidden
                };
                DenseLayer::glorot(dims[i], dims[i + 1], act, sub_seed(seed, i as u64))
            })
            .collect();
        Ok(DnnModel { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ConfigInvalid(
                "model needs at least one layer".into(),
            ));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer output {} does not feed layer input {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(DnnModel { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn forward_cached(&self, x: &Tensor2) -> Result<DnnCache> {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.clone());
        for layer in &self.layers {
            let y = dense_forward(layer, outputs.last().expect("non-empty"))?;
            outputs.push(y);
        }
        let probs = softmax(outputs.last().expect("non-empty"));
        Ok(DnnCache { outputs, probs })
    }

    pub fn predict_proba(&self, x: &Tensor2) -> Result<Tensor2> {
        Ok(self.forward_cached(x)?.probs)
    }

    /// Backpropagates `dL/dlogits` through the cached forward pass.
    /// Returns `[dW0, db0, dW1, db1, ..]` and `dL/dx`.
    pub fn backward_from_logits(
        &self,
        cache: &DnnCache,
        dlogits: Tensor2,
    ) -> Result<(Vec<Tensor2>, Tensor2)> {
        let mut grads = vec![Tensor2::zeros(0, 0); 2 * self.layers.len()];
        let mut upstream = dlogits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (dw, db, dx) =
                layer.backward(&cache.outputs[i], &cache.outputs[i + 1], &upstream)?;
            grads[2 * i] = dw;
            grads[2 * i + 1] = db;
            upstream = dx;
        }
        Ok((grads, upstream))
    }

    /// Mean cross-entropy loss over the batch and its gradient for every
    /// weight and bias, in [`DnnModel::params`] order.
    pub fn backward(&self, x: &Tensor2, targets: &[usize]) -> Result<(Vec<Tensor2>, f64)> {
        let cache = self.forward_cached(x)?;
        let loss = cross_entropy_loss(&cache.probs, targets)?;
        let dlogits = softmax_cross_entropy_grad(&cache.probs, targets)?;
        let (grads, _) = self.backward_from_logits(&cache, dlogits)?;
        Ok((grads, loss))
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(
            Tensor2::identity(3),
            Tensor2::zeros(1, 3),
            ActivationKind::Identity,
        )
        .unwrap();
        let x = t(&[vec![1.0, -2.0, 3.5], vec![0.0, 4.0, -1.0]]);
        assert_eq!(dense_forward(&layer, &x).unwrap(), x);
    }

    #[test]
    fn scalar_layer() {
        let layer =
            DenseLayer::new(t(&[vec![2.0]]), t(&[vec![1.0]]), ActivationKind::Identity).unwrap();
        assert_eq!(
            dense_forward(&layer, &t(&[vec![3.0]])).unwrap().get(0, 0),
            7.0
        );
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let layer = DenseLayer::glorot(4, 3, ActivationKind::ReLU, 1);
        assert!(matches!(
            dense_forward(&layer, &Tensor2::zeros(2, 5)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&t(&[vec![0.0, 0.0, 0.0]]));
        assert!(p.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let p = softmax(&t(&[vec![1000.0, 0.0]]));
        assert!(p.is_finite());
        assert!((p.get(0, 0) - 1.0).abs() < 1e-15 && p.get(0, 1) < 1e-300);

        let p = softmax(&t(&[vec![1f64.ln(), 2f64.ln(), 3f64.ln()]]));
        for (k, v) in p.as_slice().iter().enumerate() {
            assert!((v - (k + 1) as f64 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(
            cross_entropy_loss(&t(&[vec![0.0, 1.0, 0.0]]), &[1]).unwrap(),
            0.0
        );
        let k = 5;
        let uniform = Tensor2::from_vec(2, k, vec![1.0 / k as f64; 2 * k]).unwrap();
        assert!((cross_entropy_loss(&uniform, &[0, 3]).unwrap() - (k as f64).ln()).abs() < 1e-14);

        let p = t(&[vec![0.25, 0.75], vec![0.5, 0.5]]);
        let expected = (-(0.75f64).ln() - (0.5f64).ln()) / 2.0;
        assert!((cross_entropy_loss(&p, &[1, 0]).unwrap() - expected).abs() < 1e-15);

        // zero probability is floored instead of producing infinity
        assert!(
            (cross_entropy_loss(&t(&[vec![1.0, 0.0]]), &[1]).unwrap() + PROB_FLOOR.ln()).abs()
                < 1e-12
        );
        assert!(cross_entropy_loss(&p, &[1]).is_err());
        assert!(cross_entropy_loss(&p, &[1, 2]).is_err());
    }

    #[test]
    fn zero_weight_head_gradient_is_closed_form() {
        let layer = DenseLayer::new(
            Tensor2::zeros(3, 4),
            Tensor2::zeros(1, 4),
            ActivationKind::Identity,
        )
        .unwrap();
        let model = DnnModel::from_layers(vec![layer]).unwrap();
        let x = t(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]);
        let targets = [2, 0];
        let cache = model.forward_cached(&x).unwrap();
        let dlogits = softmax_cross_entropy_grad(&cache.probs, &targets).unwrap();
        for (r, &tgt) in targets.iter().enumerate() {
            for c in 0..4 {
                let one_hot = if c == tgt { 1.0 } else { 0.0 };
                assert!((dlogits.get(r, c) - (0.25 - one_hot) / 2.0).abs() < 1e-15);
            }
        }
        let (grads, loss) = model.backward(&x, &targets).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-14);
        // db = column sums of dlogits
        assert_eq!(grads[1], dlogits.sum_rows());
    }

    #[test]
    fn duplicated_batch_leaves_gradients_unchanged() {
        let model = DnnModel::new(&[4, 6, 3], ActivationKind::Tanh, 9).unwrap();
        let x = t(&[vec![0.1, 0.2, -0.3, 0.4], vec![-0.5, 0.6, 0.7, -0.8]]);
        let x2 = x.select_rows(&[0, 1, 0, 1]);
        let (g1, l1) = model.backward(&x, &[0, 2]).unwrap();
        let (g2, l2) = model.backward(&x2, &[0, 2, 0, 2]).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn glorot_is_seeded_and_bounded() {
        let a = glorot_init(10, 7, 42);
        assert_eq!(a, glorot_init(10, 7, 42));
        assert_ne!(a, glorot_init(10, 7, 43));
        let bound = (6.0f64 / 17.0).sqrt();
        assert!(a.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn activation_names_round_trip() {
        for a in [
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::ReLU,
            ActivationKind::Identity,
        ] {
            assert_eq!(a.as_str().parse::<ActivationKind>().unwrap(), a);
        }
        assert!("swish".parse::<ActivationKind>().is_err());
    }
}
