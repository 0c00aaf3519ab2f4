//! First-order optimizers: SGD, Adagrad, Adadelta, RMSprop, Adam, Adamax and
//! Nadam, applied element-wise over a list of parameter tensors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Declaration order is the tie-break order used when ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
    Adadelta,
    RmsProp,
    Adam,
    Adamax,
    Nadam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Sgd,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::RmsProp,
        OptimizerKind::Adam,
        OptimizerKind::Adamax,
        OptimizerKind::Nadam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamax => "adamax",
            OptimizerKind::Nadam => "nadam",
        }
    }

    /// Number of per-element accumulators the rule keeps.
    pub fn slot_count(self) -> usize {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adagrad | OptimizerKind::RmsProp => 1,
            OptimizerKind::Adadelta
            | OptimizerKind::Adam
            | OptimizerKind::Adamax
            | OptimizerKind::Nadam => 2,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == lower)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown optimizer '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Decay for RMSprop and Adadelta.
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.95,
            epsilon: 1e-8,
        }
    }
}

impl HyperParams {
    /// Adadelta keeps its classic unit scale and a larger epsilon; everything
    /// else shares [`HyperParams::default`].
    pub fn defaults_for(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Adadelta => HyperParams {
                learning_rate: 1.0,
                epsilon: 1e-6,
                ..HyperParams::default()
            },
            _ => HyperParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::ConfigInvalid(format!(
                    "{name} must be in [0, 1), got {v}"
                )))
            }
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("rho", self.rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    shapes: Vec<(usize, usize)>,
    /// `slots[param][slot]`, each the length of the parameter.
    slots: Vec<Vec<Vec<f64>>>,
    t: u64,
}

impl OptimizerState {
    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// Accumulators of one parameter tensor, in rule order
    /// (Adagrad: G; RMSprop: v; Adadelta: E[g²], E[Δ²]; Adam, Nadam: m, v;
    /// Adamax: m, u).
    pub fn slots(&self, param: usize) -> &[Vec<f64>] {
        &self.slots[param]
    }
}

pub fn init_state(kind: OptimizerKind, param_shapes: &[(usize, usize)]) -> OptimizerState {
    OptimizerState {
        kind,
        shapes: param_shapes.to_vec(),
        slots: param_shapes
            .iter()
            .map(|&(r, c)| vec![vec![0.0; r * c]; kind.slot_count()])
            .collect(),
        t: 0,
    }
}

/// Applies one update to every parameter tensor. Gradients are read only.
pub fn step(
    kind: OptimizerKind,
    params: &mut [&mut Tensor2],
    grads: &[Tensor2],
    state: &mut OptimizerState,
    hp: &HyperParams,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {i} is {:?} but its gradient is {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    if state.kind != kind {
        return Err(Error::UninitializedState(format!(
            "state was initialized for {}, not {kind}",
            state.kind
        )));
    }
    if state.shapes.len() != params.len()
        || state
            .shapes
            .iter()
            .zip(params.iter())
            .any(|(s, p)| *s != p.shape())
    {
        return Err(Error::UninitializedState(
            "state was initialized for different parameter shapes".into(),
        ));
    }

    state.t += 1;
    let t = state.t;
    for ((p, g), slots) in params.iter_mut().zip(grads).zip(state.slots.iter_mut()) {
        update(kind, hp, t, p.as_mut_slice(), g.as_slice(), slots);
    }
    Ok(())
}

fn update(
    kind: OptimizerKind,
    hp: &HyperParams,
    t: u64,
    theta: &mut [f64],
    g: &[f64],
    slots: &mut [Vec<f64>],
) {
    let lr = hp.learning_rate;
    let eps = hp.epsilon;
    match kind {
        // θ ← θ − η·g
        OptimizerKind::Sgd => {
            for (th, &gi) in theta.iter_mut().zip(g) {
                *th -= lr * gi;
            }
        }
        // Duchi et al.: G ← G + g², θ ← θ − η·g/(√G + ε)
        OptimizerKind::Adagrad => {
            let acc = &mut slots[0];
            for k in 0..theta.len() {
                acc[k] += g[k] * g[k];
                theta[k] -= lr * g[k] / (acc[k].sqrt() + eps);
            }
        }
        // Hinton: v ← ρv + (1−ρ)g², θ ← θ − η·g/(√v + ε)
        OptimizerKind::RmsProp => {
            let v = &mut slots[0];
            for k in 0..theta.len() {
                v[k] = hp.rho * v[k] + (1.0 - hp.rho) * g[k] * g[k];
                theta[k] -= lr * g[k] / (v[k].sqrt() + eps);
            }
        }
        // Zeiler: E[g²] ← ρE[g²] + (1−ρ)g²
        //         Δ = −√(E[Δ²] + ε)/√(E[g²] + ε)·g
        //         E[Δ²] ← ρE[Δ²] + (1−ρ)Δ², θ ← θ + η·Δ
        OptimizerKind::Adadelta => {
            let (eg, rest) = slots.split_at_mut(1);
            let (eg, ed) = (&mut eg[0], &mut rest[0]);
            for k in 0..theta.len() {
                eg[k] = hp.rho * eg[k] + (1.0 - hp.rho) * g[k] * g[k];
                let delta = -(ed[k] + eps).sqrt() / (eg[k] + eps).sqrt() * g[k];
                ed[k] = hp.rho * ed[k] + (1.0 - hp.rho) * delta * delta;
                theta[k] += lr * delta;
            }
        }
        // Kingma & Ba: m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g²,
        // θ ← θ − η·m̂/(√v̂ + ε)
        OptimizerKind::Adam => {
            let (b1, b2) = (hp.beta1, hp.beta2);
            let c1 = 1.0 - b1.powi(t as i32);
            let c2 = 1.0 - b2.powi(t as i32);
            let (m, rest) = slots.split_at_mut(1);
            let (m, v) = (&mut m[0], &mut rest[0]);
            for k in 0..theta.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                theta[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        // Kingma & Ba, infinity norm: u ← max(β₂u, |g|), θ ← θ − (η/(1−β₁ᵗ))·m/u.
        // Elements whose u is still zero have seen only zero gradients.
        OptimizerKind::Adamax => {
            let (b1, b2) = (hp.beta1, hp.beta2);
            let step_size = lr / (1.0 - b1.powi(t as i32));
            let (m, rest) = slots.split_at_mut(1);
            let (m, u) = (&mut m[0], &mut rest[0]);
            for k in 0..theta.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                u[k] = (b2 * u[k]).max(g[k].abs());
                if u[k] > 0.0 {
                    theta[k] -= step_size * m[k] / u[k];
                }
            }
        }
        // Dozat: Adam moments with a Nesterov look-ahead on the first moment,
        // θ ← θ − η/(√v̂ + ε)·(β₁m̂ + (1−β₁)g/(1−β₁ᵗ))
        OptimizerKind::Nadam => {
            let (b1, b2) = (hp.beta1, hp.beta2);
            let c1 = 1.0 - b1.powi(t as i32);
            let c2 = 1.0 - b2.powi(t as i32);
            let (m, rest) = slots.split_at_mut(1);
            let (m, v) = (&mut m[0], &mut rest[0]);
            for k in 0..theta.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                let look_ahead = b1 * m_hat + (1.0 - b1) * g[k] / c1;
                theta[k] -= lr * look_ahead / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Kind, hyperparameters and state bundled for a training loop.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub hp: HyperParams,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(
        kind: OptimizerKind,
        hp: HyperParams,
        param_shapes: &[(usize, usize)],
    ) -> Result<Self> {
        hp.validate()?;
        Ok(Optimizer {
            kind,
            hp,
            state: init_state(kind, param_shapes),
        })
    }

    pub fn step(&mut self, params: &mut [&mut Tensor2], grads: &[Tensor2]) -> Result<()> {
        step(self.kind, params, grads, &mut self.state, &self.hp)
    }
}
