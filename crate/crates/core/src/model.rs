//! Trainable classifiers: a DNN (`input → hidden → classes`), or an RNN/LSTM
//! layer whose final hidden state feeds a dense softmax head.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::checksum_f64s;
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy_loss, softmax, softmax_cross_entropy_grad, sub_seed, ActivationKind, DenseLayer,
    DnnModel,
};
use crate::recurrent::{step_width, LstmCell, RecurrentCell, RnnCell, SequenceBatch};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dnn,
    Rnn,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dnn, ModelKind::Rnn, ModelKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown model kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Encoded feature width.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Hidden activation of the DNN; recurrent cells use their fixed gates.
    pub activation: ActivationKind,
    /// Recurrent models only: the feature row is cut into this many steps.
    pub time_steps: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes < 2 {
            return Err(Error::ConfigInvalid(format!(
                "model needs positive dims and at least 2 classes (input {}, hidden {}, classes {})",
                self.input_dim, self.hidden_dim, self.num_classes
            )));
        }
        if self.time_steps == 0 || self.time_steps > self.input_dim {
            return Err(Error::ConfigInvalid(format!(
                "time_steps must be in 1..={}, got {}",
                self.input_dim, self.time_steps
            )));
        }
        if self.kind == ModelKind::Dnn && self.time_steps != 1 {
            return Err(Error::ConfigInvalid(
                "time_steps applies only to recurrent models".into(),
            ));
        }
        Ok(())
    }

    /// Width of one recurrent input step.
    pub fn step_dim(&self) -> usize {
        step_width(self.input_dim, self.time_steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Network {
    Dnn(DnnModel),
    Rnn { cell: RnnCell, head: DenseLayer },
    Lstm { cell: LstmCell, head: DenseLayer },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ModelSpec,
    net: Network,
}

/// Loss, parameter gradients and the probabilities they were computed from.
#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub loss: f64,
    pub grads: Vec<Tensor2>,
    pub probs: Tensor2,
}

fn head_backward<C: RecurrentCell>(
    cell: &C,
    head: &DenseLayer,
    x: &Tensor2,
    time_steps: usize,
    targets: &[usize],
) -> Result<LossAndGrads> {
    let seq = SequenceBatch::from_features(x, time_steps)?;
    let (state, cache) = cell.unroll_forward(&seq, &cell.zero_state(x.rows()))?;
    let h = C::hidden(&state);
    let logits = head.affine(h)?;
    let probs = softmax(&logits);
    let loss = cross_entropy_loss(&probs, targets)?;
    let dlogits = softmax_cross_entropy_grad(&probs, targets)?;
    let (dw, db, dh) = head.backward(h, &logits, &dlogits)?;
    let mut grads = cell.bptt_backward(&cache, &dh)?.params;
    grads.push(dw);
    grads.push(db);
    Ok(LossAndGrads { loss, grads, probs })
}

fn head_forward<C: RecurrentCell>(
    cell: &C,
    head: &DenseLayer,
    x: &Tensor2,
    time_steps: usize,
) -> Result<Tensor2> {
    let seq = SequenceBatch::from_features(x, time_steps)?;
    let (state, _) = cell.unroll_forward(&seq, &cell.zero_state(x.rows()))?;
    Ok(softmax(&head.affine(C::hidden(&state))?))
}

impl Classifier {
    /// Glorot-initialized weights and zero biases, deterministic per seed.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let head = || {
            DenseLayer::glorot(
                spec.hidden_dim,
                spec.num_classes,
                ActivationKind::Identity,
                sub_seed(seed, 100),
            )
        };
        let net = match spec.kind {
            ModelKind::Dnn => Network::Dnn(DnnModel::new(
                &[spec.input_dim, spec.hidden_dim, spec.num_classes],
                spec.activation,
                seed,
            )?),
            ModelKind::Rnn => Network::Rnn {
                cell: RnnCell::glorot(spec.step_dim(), spec.hidden_dim, seed),
                head: head(),
            },
            ModelKind::Lstm => Network::Lstm {
                cell: LstmCell::glorot(spec.step_dim(), spec.hidden_dim, seed),
                head: head(),
            },
        };
        Ok(Classifier { spec, net })
    }

    /// Rebuilds a classifier from tensors in [`Classifier::params`] order.
    pub fn from_params(spec: ModelSpec, tensors: Vec<Tensor2>) -> Result<Self> {
        let mut model = Classifier::new(spec, 0)?;
        let expected = model.param_shapes();
        let found: Vec<_> = tensors.iter().map(Tensor2::shape).collect();
        if expected != found {
            return Err(Error::ShapeMismatch(format!(
                "model {} expects parameter shapes {expected:?}, found {found:?}",
                spec.kind
            )));
        }
        for (slot, t) in model.params_mut().into_iter().zip(tensors) {
            *slot = t;
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, batch has {}",
                self.spec.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn predict_proba(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_input(x)?;
        let t = self.spec.time_steps;
        match &self.net {
            Network::Dnn(m) => m.predict_proba(x),
            Network::Rnn { cell, head } => head_forward(cell, head, x, t),
            Network::Lstm { cell, head } => head_forward(cell, head, x, t),
        }
    }

    /// Mean cross-entropy over the batch and its exact gradient for every
    /// parameter, in [`Classifier::params`] order.
    pub fn loss_and_grads(&self, x: &Tensor2, targets: &[usize]) -> Result<LossAndGrads> {
        self.check_input(x)?;
        let t = self.spec.time_steps;
        match &self.net {
            Network::Dnn(m) => {
                let cache = m.forward_cached(x)?;
                let loss = cross_entropy_loss(&cache.probs, targets)?;
                let dlogits = softmax_cross_entropy_grad(&cache.probs, targets)?;
                let (grads, _) = m.backward_from_logits(&cache, dlogits)?;
                Ok(LossAndGrads {
                    loss,
                    grads,
                    probs: cache.probs,
                })
            }
            Network::Rnn { cell, head } => head_backward(cell, head, x, t, targets),
            Network::Lstm { cell, head } => head_backward(cell, head, x, t, targets),
        }
    }

    pub fn params(&self) -> Vec<&Tensor2> {
        match &self.net {
            Network::Dnn(m) => m.params(),
            Network::Rnn { cell, head } => cell
                .params()
                .into_iter()
                .chain([&head.weights, &head.bias])
                .collect(),
            Network::Lstm { cell, head } => cell
                .params()
                .into_iter()
                .chain([&head.weights, &head.bias])
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        match &mut self.net {
            Network::Dnn(m) => m.params_mut(),
            Network::Rnn { cell, head } => cell
                .params_mut()
                .into_iter()
                .chain([&mut head.weights, &mut head.bias])
                .collect(),
            Network::Lstm { cell, head } => cell
                .params_mut()
                .into_iter()
                .chain([&mut head.weights, &mut head.bias])
                .collect(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let head = ["head.weights".to_string(), "head.bias".to_string()];
        match &self.net {
            Network::Dnn(m) => (0..m.layers.len())
                .flat_map(|i| [format!("dense{i}.weights"), format!("dense{i}.bias")])
                .collect(),
            Network::Rnn { cell, .. } => cell.param_names().into_iter().chain(head).collect(),
            Network::Lstm { cell, .. } => cell.param_names().into_iter().chain(head).collect(),
        }
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|t| t.shape()).collect()
    }

    /// SHA-256 over all parameters' little-endian bytes.
    pub fn param_checksum(&self) -> String {
        checksum_f64s(self.params().into_iter().map(Tensor2::as_slice))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ModelKind, time_steps: usize) -> ModelSpec {
        ModelSpec {
            kind,
            input_dim: 6,
            hidden_dim: 4,
            num_classes: 3,
            activation: ActivationKind::Tanh,
            time_steps,
        }
    }

    fn batch() -> (Tensor2, Vec<usize>) {
        let data = (0..18).map(|i| ((i as f64) * 0.37).sin()).collect();
        (Tensor2::from_vec(3, 6, data).unwrap(), vec![0, 2, 1])
    }

    fn max_rel_error(model: &Classifier, x: &Tensor2, y: &[usize]) -> f64 {
        let analytic = model.loss_and_grads(x, y).unwrap().grads;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (p, g) in analytic.iter().enumerate() {
            for k in 0..g.len() {
                let mut plus = model.clone();
                plus.params_mut()[p].as_mut_slice()[k] += h;
                let mut minus = model.clone();
                minus.params_mut()[p].as_mut_slice()[k] -= h;
                let lp = plus.loss_and_grads(x, y).unwrap().loss;
                let lm = minus.loss_and_grads(x, y).unwrap().loss;
                let numeric = (lp - lm) / (2.0 * h);
                let a = g.as_slice()[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (x, y) = batch();
        for (kind, t) in [
            (ModelKind::Dnn, 1),
            (ModelKind::Rnn, 3),
            (ModelKind::Lstm, 2),
            (ModelKind::Lstm, 1),
        ] {
            let model = Classifier::new(spec(kind, t), 11).unwrap();
            let err = max_rel_error(&model, &x, &y);
            assert!(err < 1e-4, "{kind} T={t}: {err}");
        }
    }

    #[test]
    fn probabilities_are_distributions() {
        let (x, _) = batch();
        for kind in ModelKind::ALL {
            let p = Classifier::new(spec(kind, 1), 2)
                .unwrap()
                .predict_proba(&x)
                .unwrap();
            assert_eq!(p.shape(), (3, 3));
            for r in 0..3 {
                assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_through_params() {
        for kind in ModelKind::ALL {
            let m = Classifier::new(spec(kind, 1), 5).unwrap();
            let tensors = m.params().into_iter().cloned().collect();
            let back = Classifier::from_params(*m.spec(), tensors).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.param_names().len(), back.params().len());
        }
        let m = Classifier::new(spec(ModelKind::Rnn, 1), 5).unwrap();
        assert!(matches!(
            Classifier::from_params(*m.spec(), vec![Tensor2::zeros(1, 1)]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn lstm_has_four_gate_parameter_sets() {
        let m = Classifier::new(spec(ModelKind::Lstm, 1), 1).unwrap();
        assert_eq!(m.params().len(), 4 * 3 + 2);
        assert!(m.param_names()[3].starts_with("lstm.forget"));
    }

    #[test]
    fn seeds_control_initialization() {
        let a = Classifier::new(spec(ModelKind::Dnn, 1), 1).unwrap();
        assert_eq!(
            a.param_checksum(),
            Classifier::new(spec(ModelKind::Dnn, 1), 1)
                .unwrap()
                .param_checksum()
        );
        assert_ne!(
            a.param_checksum(),
            Classifier::new(spec(ModelKind::Dnn, 1), 2)
                .unwrap()
                .param_checksum()
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(Classifier::new(spec(ModelKind::Dnn, 2), 0).is_err());
        assert!(Classifier::new(spec(ModelKind::Lstm, 0), 0).is_err());
        assert!(Classifier::new(spec(ModelKind::Rnn, 7), 0).is_err());
        let (x, _) = batch();
        let m = Classifier::new(
            ModelSpec {
                input_dim: 5,
                ..spec(ModelKind::Dnn, 1)
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            m.predict_proba(&x),
            Err(Error::DimensionMismatch(_))
        ));
        assert_eq!("LSTM".parse::<ModelKind>().unwrap(), ModelKind::Lstm);
    }
}
