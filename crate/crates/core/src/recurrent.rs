//! Simple-RNN and LSTM cells, unrolled over time with exact backpropagation
//! through time.
//!
//! Weight layout follows the dense layers: input projections are
//! `in_dim x hidden`, recurrent projections `hidden x hidden`, biases
//! `1 x hidden`, and every product is `batch x in · in x out`.

use crate::error::{Error, Result};
use crate::nn::{glorot_init, sigmoid, sub_seed};
use crate::tensor::Tensor2;

/// Per-time-step inputs sharing batch size and width.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    steps: Vec<Tensor2>,
}

impl SequenceBatch {
    pub fn new(steps: Vec<Tensor2>) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| Error::DimensionMismatch("sequence needs at least one step".into()))?;
        let shape = first.shape();
        if let Some(bad) = steps.iter().find(|s| s.shape() != shape) {
            return Err(Error::DimensionMismatch(format!(
                "step shape {:?} differs from {:?}",
                bad.shape(),
                shape
            )));
        }
        Ok(SequenceBatch { steps })
    }

    /// Splits each feature row into `time_steps` consecutive chunks of equal
    /// width, zero-padding the tail. With one step the row is used whole.
    pub fn from_features(x: &Tensor2, time_steps: usize) -> Result<Self> {
        if time_steps == 0 {
            return Err(Error::ConfigInvalid("time_steps must be >= 1".into()));
        }
        if time_steps == 1 {
            return SequenceBatch::new(vec![x.clone()]);
        }
        let width = step_width(x.cols(), time_steps);
        let steps = (0..time_steps)
            .map(|t| {
                let mut step = Tensor2::zeros(x.rows(), width);
                let start = (t * width).min(x.cols());
                let end = ((t + 1) * width).min(x.cols());
                for r in 0..x.rows() {
                    step.row_mut(r)[..end - start].copy_from_slice(&x.row(r)[start..end]);
                }
                step
            })
            .collect();
        SequenceBatch::new(steps)
    }

    pub fn time_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn batch_size(&self) -> usize {
        self.steps[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.steps[0].cols()
    }

    pub fn steps(&self) -> &[Tensor2] {
        &self.steps
    }
}

/// Width of one step when `features` columns are spread over `time_steps`.
pub fn step_width(features: usize, time_steps: usize) -> usize {
    features.div_ceil(time_steps)
}

/// Gradients returned by [`RecurrentCell::bptt_backward`].
#[derive(Debug, Clone)]
pub struct BpttGrads {
    /// Same order as [`RecurrentCell::params`].
    pub params: Vec<Tensor2>,
    /// `dL/dx_t` for every step.
    pub inputs: Vec<Tensor2>,
    pub initial_hidden: Tensor2,
    /// LSTM only.
    pub initial_cell: Option<Tensor2>,
}

pub trait RecurrentCell {
    type State: Clone;
    type Cache;

    fn input_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn zero_state(&self, batch: usize) -> Self::State;
    fn hidden(state: &Self::State) -> &Tensor2;

    /// Runs every step in order, keeping what BPTT needs.
    fn unroll_forward(
        &self,
        seq: &SequenceBatch,
        init: &Self::State,
    ) -> Result<(Self::State, Self::Cache)>;

    /// Exact gradients through all steps given `dL/dh_T`.
    fn bptt_backward(&self, cache: &Self::Cache, upstream: &Tensor2) -> Result<BpttGrads>;

    fn params(&self) -> Vec<&Tensor2>;
    fn params_mut(&mut self) -> Vec<&mut Tensor2>;
    fn param_names(&self) -> Vec<String>;
}

fn check_step(x: &Tensor2, h: &Tensor2, input_dim: usize, hidden: usize) -> Result<()> {
    if x.cols() != input_dim || h.cols() != hidden || x.rows() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "step input {:?} / state {:?} for a cell with input {input_dim}, hidden {hidden}",
            x.shape(),
            h.shape()
        )));
    }
    Ok(())
}

fn add_into(acc: &mut Tensor2, g: &Tensor2) {
    acc.add_assign(g)
        .expect("gradient shapes are fixed by the cell");
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub w_xh: Tensor2,
    pub w_hh: Tensor2,
    pub b_h: Tensor2,
}

#[derive(Debug, Clone)]
pub struct RnnCache {
    inputs: Vec<Tensor2>,
    /// `h_0 .. h_T`
    hiddens: Vec<Tensor2>,
}

impl RnnCell {
    pub fn new(w_xh: Tensor2, w_hh: Tensor2, b_h: Tensor2) -> Result<Self> {
        let h = w_hh.rows();
        if w_hh.cols() != h || w_xh.cols() != h || b_h.shape() != (1, h) {
            return Err(Error::DimensionMismatch(format!(
                "rnn cell shapes w_xh {:?}, w_hh {:?}, b_h {:?}",
                w_xh.shape(),
                w_hh.shape(),
                b_h.shape()
            )));
        }
        Ok(RnnCell { w_xh, w_hh, b_h })
    }

    pub fn glorot(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        RnnCell {
            w_xh: glorot_init(input_dim, hidden_dim, sub_seed(seed, 0)),
            w_hh: glorot_init(hidden_dim, hidden_dim, sub_seed(seed, 1)),
            b_h: Tensor2::zeros(1, hidden_dim),
        }
    }

    /// `h_t = tanh(x_t·W_xh + h_prev·W_hh + b_h)`
    pub fn step(&self, x_t: &Tensor2, h_prev: &Tensor2) -> Result<Tensor2> {
        check_step(x_t, h_prev, self.input_dim(), self.hidden_dim())?;
        let mut z = x_t.matmul(&self.w_xh)?;
        z.add_matmul(h_prev, &self.w_hh)?;
        z.add_row_broadcast(&self.b_h)?;
        z.map_inplace(f64::tanh);
        Ok(z)
    }
}

impl RecurrentCell for RnnCell {
    type State = Tensor2;
    type Cache = RnnCache;

    fn input_dim(&self) -> usize {
        self.w_xh.rows()
    }

    fn hidden_dim(&self) -> usize {
        self.w_hh.rows()
    }

    fn zero_state(&self, batch: usize) -> Tensor2 {
        Tensor2::zeros(batch, self.hidden_dim())
    }

    fn hidden(state: &Tensor2) -> &Tensor2 {
        state
    }

    fn unroll_forward(&self, seq: &SequenceBatch, h0: &Tensor2) -> Result<(Tensor2, RnnCache)> {
        let mut hiddens = Vec::with_capacity(seq.time_steps() + 1);
        hiddens.push(h0.clone());
        for x in seq.steps() {
            let h = self.step(x, hiddens.last().expect("non-empty"))?;
            hiddens.push(h);
        }
        let last = hiddens.last().expect("non-empty").clone();
        Ok((
            last,
            RnnCache {
                inputs: seq.steps().to_vec(),
                hiddens,
            },
        ))
    }

    fn bptt_backward(&self, cache: &RnnCache, upstream: &Tensor2) -> Result<BpttGrads> {
        let (h, d) = (self.hidden_dim(), self.input_dim());
        let steps = cache.inputs.len();
        if cache.hiddens.len() != steps + 1
            || cache.inputs.iter().any(|x| x.cols() != d)
            || cache.hiddens.iter().any(|s| s.cols() != h)
            || upstream.shape() != cache.hiddens[steps].shape()
        {
            return Err(Error::StaleCache(
                "cache does not match this rnn cell".into(),
            ));
        }

        let mut dw_xh = Tensor2::zeros(d, h);
        let mut dw_hh = Tensor2::zeros(h, h);
        let mut db = Tensor2::zeros(1, h);
        let mut dxs = vec![Tensor2::zeros(0, 0); steps];
        let mut dh = upstream.clone();
        for t in (0..steps).rev() {
            let h_t = &cache.hiddens[t + 1];
            let mut dz = dh;
            dz.as_mut_slice()
                .iter_mut()
                .zip(h_t.as_slice())
                .for_each(|(g, &y)| *g *= 1.0 - y * y);
            add_into(&mut dw_xh, &cache.inputs[t].t_matmul(&dz)?);
            add_into(&mut dw_hh, &cache.hiddens[t].t_matmul(&dz)?);
            add_into(&mut db, &dz.sum_rows());
            dxs[t] = dz.matmul_t(&self.w_xh)?;
            dh = dz.matmul_t(&self.w_hh)?;
        }
        Ok(BpttGrads {
            params: vec![dw_xh, dw_hh, db],
            inputs: dxs,
            initial_hidden: dh,
            initial_cell: None,
        })
    }

    fn params(&self) -> Vec<&Tensor2> {
        vec![&self.w_xh, &self.w_hh, &self.b_h]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        vec![&mut self.w_xh, &mut self.w_hh, &mut self.b_h]
    }

    fn param_names(&self) -> Vec<String> {
        ["rnn.w_xh", "rnn.w_hh", "rnn.b_h"]
            .map(String::from)
            .to_vec()
    }
}

/// Input, forget and output gates plus the tanh candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_x: Tensor2,
    pub w_h: Tensor2,
    pub b: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// Indexed by [`Gate`].
    pub gates: [GateParams; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Tensor2,
    pub c: Tensor2,
}

/// Gate activations of one step.
#[derive(Debug, Clone)]
pub struct LstmStepValues {
    pub i: Tensor2,
    pub f: Tensor2,
    pub o: Tensor2,
    pub g: Tensor2,
    pub c: Tensor2,
    pub tanh_c: Tensor2,
    pub h: Tensor2,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Vec<Tensor2>,
    /// States `0 .. T`
    states: Vec<LstmState>,
    steps: Vec<LstmStepValues>,
}

impl LstmCell {
    pub fn new(gates: [GateParams; 4]) -> Result<Self> {
        let d = gates[0].w_x.rows();
        let h = gates[0].w_h.rows();
        for g in &gates {
            if g.w_x.shape() != (d, h) || g.w_h.shape() != (h, h) || g.b.shape() != (1, h) {
                return Err(Error::DimensionMismatch(format!(
                    "lstm gate shapes w_x {:?}, w_h {:?}, b {:?} for input {d}, hidden {h}",
                    g.w_x.shape(),
                    g.w_h.shape(),
                    g.b.shape()
                )));
            }
        }
        Ok(LstmCell { gates })
    }

    pub fn glorot(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let gate = |k: u64| GateParams {
            w_x: glorot_init(input_dim, hidden_dim, sub_seed(seed, 2 * k)),
            w_h: glorot_init(hidden_dim, hidden_dim, sub_seed(seed, 2 * k + 1)),
            b: Tensor2::zeros(1, hidden_dim),
        };
        LstmCell {
            gates: [gate(0), gate(1), gate(2), gate(3)],
        }
    }

    pub fn gate(&self, g: Gate) -> &GateParams {
        &self.gates[g as usize]
    }

    fn preactivation(&self, g: Gate, x: &Tensor2, h: &Tensor2) -> Result<Tensor2> {
        let p = self.gate(g);
        let mut a = x.matmul(&p.w_x)?;
        a.add_matmul(h, &p.w_h)?;
        a.add_row_broadcast(&p.b)?;
        Ok(a)
    }

    /// One step with every intermediate value.
    pub fn step_values(
        &self,
        x: &Tensor2,
        h_prev: &Tensor2,
        c_prev: &Tensor2,
    ) -> Result<LstmStepValues> {
        check_step(x, h_prev, self.input_dim(), self.hidden_dim())?;
        if c_prev.shape() != h_prev.shape() {
            return Err(Error::DimensionMismatch(format!(
                "cell state {:?} vs hidden state {:?}",
                c_prev.shape(),
                h_prev.shape()
            )));
        }
        let mut i = self.preactivation(Gate::Input, x, h_prev)?;
        let mut f = self.preactivation(Gate::Forget, x, h_prev)?;
        let mut o = self.preactivation(Gate::Output, x, h_prev)?;
        let mut g = self.preactivation(Gate::Candidate, x, h_prev)?;
        i.map_inplace(sigmoid);
        f.map_inplace(sigmoid);
        o.map_inplace(sigmoid);
        g.map_inplace(f64::tanh);

        let mut c = f.hadamard(c_prev)?;
        c.add_assign(&i.hadamard(&g)?)?;
        let tanh_c = c.map(f64::tanh);
        let h = o.hadamard(&tanh_c)?;
        Ok(LstmStepValues {
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        })
    }

    /// `c_t = f⊙c_prev + i⊙g`, `h_t = o⊙tanh(c_t)`
    pub fn step(
        &self,
        x: &Tensor2,
        h_prev: &Tensor2,
        c_prev: &Tensor2,
    ) -> Result<(Tensor2, Tensor2)> {
        let v = self.step_values(x, h_prev, c_prev)?;
        Ok((v.h, v.c))
    }
}

impl RecurrentCell for LstmCell {
    type State = LstmState;
    type Cache = LstmCache;

    fn input_dim(&self) -> usize {
        self.gates[0].w_x.rows()
    }

    fn hidden_dim(&self) -> usize {
        self.gates[0].w_h.rows()
    }

    fn zero_state(&self, batch: usize) -> LstmState {
        LstmState {
            h: Tensor2::zeros(batch, self.hidden_dim()),
            c: Tensor2::zeros(batch, self.hidden_dim()),
        }
    }

    fn hidden(state: &LstmState) -> &Tensor2 {
        &state.h
    }

    fn unroll_forward(
        &self,
        seq: &SequenceBatch,
        init: &LstmState,
    ) -> Result<(LstmState, LstmCache)> {
        let mut states = Vec::with_capacity(seq.time_steps() + 1);
        let mut steps = Vec::with_capacity(seq.time_steps());
        states.push(init.clone());
        for x in seq.steps() {
            let prev = states.last().expect("non-empty");
            let v = self.step_values(x, &prev.h, &prev.c)?;
            states.push(LstmState {
                h: v.h.clone(),
                c: v.c.clone(),
            });
            steps.push(v);
        }
        let last = states.last().expect("non-empty").clone();
        Ok((
            last,
            LstmCache {
                inputs: seq.steps().to_vec(),
                states,
                steps,
            },
        ))
    }

    fn bptt_backward(&self, cache: &LstmCache, upstream: &Tensor2) -> Result<BpttGrads> {
        let (h, d) = (self.hidden_dim(), self.input_dim());
        let n = cache.inputs.len();
        if cache.states.len() != n + 1
            || cache.steps.len() != n
            || cache.inputs.iter().any(|x| x.cols() != d)
            || cache
                .states
                .iter()
                .any(|s| s.h.cols() != h || s.c.cols() != h)
            || upstream.shape() != cache.states[n].h.shape()
        {
            return Err(Error::StaleCache(
                "cache does not match this lstm cell".into(),
            ));
        }

        let mut grads: Vec<[Tensor2; 3]> = (0..4)
            .map(|_| {
                [
                    Tensor2::zeros(d, h),
                    Tensor2::zeros(h, h),
                    Tensor2::zeros(1, h),
                ]
            })
            .collect();
        let mut dxs = vec![Tensor2::zeros(0, 0); n];
        let mut dh = upstream.clone();
        let mut dc = Tensor2::zeros(upstream.rows(), h);

        for t in (0..n).rev() {
            let v = &cache.steps[t];
            let prev = &cache.states[t];
            let len = dh.len();
            let mut da: [Tensor2; 4] = std::array::from_fn(|_| Tensor2::zeros(dh.rows(), h));
            let mut dc_prev = Tensor2::zeros(dh.rows(), h);
            {
                let (dh_s, dc_s) = (dh.as_slice(), dc.as_mut_slice());
                let [da_i, da_f, da_o, da_g] = &mut da;
                let (da_i, da_f, da_o, da_g) = (
                    da_i.as_mut_slice(),
                    da_f.as_mut_slice(),
                    da_o.as_mut_slice(),
                    da_g.as_mut_slice(),
                );
                let dcp = dc_prev.as_mut_slice();
                let (i, f, o, g, tc, cp) = (
                    v.i.as_slice(),
                    v.f.as_slice(),
                    v.o.as_slice(),
                    v.g.as_slice(),
                    v.tanh_c.as_slice(),
                    prev.c.as_slice(),
                );
                for k in 0..len {
                    let d_o = dh_s[k] * tc[k];
                    let dck = dc_s[k] + dh_s[k] * o[k] * (1.0 - tc[k] * tc[k]);
                    let d_i = dck * g[k];
                    let d_g = dck * i[k];
                    let d_f = dck * cp[k];
                    dcp[k] = dck * f[k];
                    da_i[k] = d_i * i[k] * (1.0 - i[k]);
                    da_f[k] = d_f * f[k] * (1.0 - f[k]);
                    da_o[k] = d_o * o[k] * (1.0 - o[k]);
                    da_g[k] = d_g * (1.0 - g[k] * g[k]);
                }
            }

            let x = &cache.inputs[t];
            let mut dx = Tensor2::zeros(x.rows(), d);
            let mut dh_prev = Tensor2::zeros(x.rows(), h);
            for gate in Gate::ALL {
                let a = &da[gate as usize];
                let p = self.gate(gate);
                let acc = &mut grads[gate as usize];
                add_into(&mut acc[0], &x.t_matmul(a)?);
                add_into(&mut acc[1], &prev.h.t_matmul(a)?);
                add_into(&mut acc[2], &a.sum_rows());
                add_into(&mut dx, &a.matmul_t(&p.w_x)?);
                add_into(&mut dh_prev, &a.matmul_t(&p.w_h)?);
            }
            dxs[t] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }

        Ok(BpttGrads {
            params: grads.into_iter().flatten().collect(),
            inputs: dxs,
            initial_hidden: dh,
            initial_cell: Some(dc),
        })
    }

    fn params(&self) -> Vec<&Tensor2> {
        self.gates
            .iter()
            .flat_map(|g| [&g.w_x, &g.w_h, &g.b])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        self.gates
            .iter_mut()
            .flat_map(|g| [&mut g.w_x, &mut g.w_h, &mut g.b])
            .collect()
    }

    fn param_names(&self) -> Vec<String> {
        Gate::ALL
            .iter()
            .flat_map(|g| ["w_x", "w_h", "b"].map(|p| format!("lstm.{}.{p}", g.name())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{dense_forward, ActivationKind, DenseLayer};

    fn filled(rows: usize, cols: usize, seed: f64) -> Tensor2 {
        let data = (0..rows * cols)
            .map(|i| ((i as f64 * 1.3 + seed) * 0.71).sin() * 0.8)
            .collect();
        Tensor2::from_vec(rows, cols, data).unwrap()
    }

    fn close(a: &Tensor2, b: &Tensor2, tol: f64) -> bool {
        a.shape() == b.shape()
            && a.as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| (x - y).abs() <= tol)
    }

    fn zero_lstm(d: usize, h: usize) -> LstmCell {
        let gate = || GateParams {
            w_x: Tensor2::zeros(d, h),
            w_h: Tensor2::zeros(h, h),
            b: Tensor2::zeros(1, h),
        };
        LstmCell::new([gate(), gate(), gate(), gate()]).unwrap()
    }

    #[test]
    fn zero_rnn_gives_zero_state() {
        let cell = RnnCell::new(
            Tensor2::zeros(3, 4),
            Tensor2::zeros(4, 4),
            Tensor2::zeros(1, 4),
        )
        .unwrap();
        let h = cell
            .step(&Tensor2::zeros(2, 3), &Tensor2::zeros(2, 4))
            .unwrap();
        assert_eq!(h, Tensor2::zeros(2, 4));
    }

    #[test]
    fn rnn_without_recurrence_is_a_tanh_dense_layer() {
        let mut cell = RnnCell::glorot(5, 4, 3);
        cell.w_hh = Tensor2::zeros(4, 4);
        cell.b_h = filled(1, 4, 0.2);
        let x = filled(3, 5, 1.0);
        let h_prev = filled(3, 4, 2.0);
        let layer =
            DenseLayer::new(cell.w_xh.clone(), cell.b_h.clone(), ActivationKind::Tanh).unwrap();
        assert!(close(
            &cell.step(&x, &h_prev).unwrap(),
            &dense_forward(&layer, &x).unwrap(),
            1e-15
        ));
    }

    #[test]
    fn rnn_step_rejects_bad_shapes() {
        let cell = RnnCell::glorot(3, 4, 1);
        assert!(matches!(
            cell.step(&Tensor2::zeros(2, 2), &Tensor2::zeros(2, 4)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(RnnCell::new(
            Tensor2::zeros(3, 4),
            Tensor2::zeros(4, 3),
            Tensor2::zeros(1, 4)
        )
        .is_err());
    }

    #[test]
    fn lstm_at_zero_parameters() {
        let cell = zero_lstm(3, 2);
        let c_prev = Tensor2::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let (h, c) = cell
            .step(&filled(1, 3, 0.0), &Tensor2::zeros(1, 2), &c_prev)
            .unwrap();
        for k in 0..2 {
            let expected_c = 0.5 * c_prev.get(0, k);
            assert!((c.get(0, k) - expected_c).abs() < 1e-15);
            assert!((h.get(0, k) - 0.5 * expected_c.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_forget_gate_carries_state() {
        let mut cell = zero_lstm(2, 3);
        cell.gates[Gate::Forget as usize].b.fill(50.0);
        let c_prev = Tensor2::from_rows(&[vec![0.7, -1.5, 3.0]]).unwrap();
        let (_, c) = cell
            .step(&Tensor2::zeros(1, 2), &Tensor2::zeros(1, 3), &c_prev)
            .unwrap();
        assert!(close(&c, &c_prev, 1e-12));
    }

    #[test]
    fn single_step_unroll_equals_step() {
        let cell = LstmCell::glorot(4, 3, 5);
        let x = filled(2, 4, 0.4);
        let init = cell.zero_state(2);
        let (state, _) = cell
            .unroll_forward(&SequenceBatch::new(vec![x.clone()]).unwrap(), &init)
            .unwrap();
        let (h, c) = cell.step(&x, &init.h, &init.c).unwrap();
        assert_eq!(state.h, h);
        assert_eq!(state.c, c);
    }

    #[test]
    fn decoupled_rnn_depends_only_on_last_input() {
        let mut cell = RnnCell::glorot(3, 4, 8);
        cell.w_hh = Tensor2::zeros(4, 4);
        let x2 = filled(2, 3, 5.0);
        let a = SequenceBatch::new(vec![filled(2, 3, 1.0), x2.clone()]).unwrap();
        let b = SequenceBatch::new(vec![filled(2, 3, 9.0), x2.clone()]).unwrap();
        let init = cell.zero_state(2);
        let (ha, _) = cell.unroll_forward(&a, &init).unwrap();
        let (hb, _) = cell.unroll_forward(&b, &init).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ha, cell.step(&x2, &init).unwrap());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cell = LstmCell::glorot(3, 4, 2);
        let seq = SequenceBatch::new(vec![filled(2, 3, 0.1), filled(2, 3, 0.2)]).unwrap();
        let (_, cache) = cell.unroll_forward(&seq, &cell.zero_state(2)).unwrap();
        let g = cell.bptt_backward(&cache, &Tensor2::zeros(2, 4)).unwrap();
        assert!(g
            .params
            .iter()
            .all(|t| t.as_slice().iter().all(|&v| v == 0.0)));

        let rnn = RnnCell::glorot(3, 4, 2);
        let (_, cache) = rnn.unroll_forward(&seq, &rnn.zero_state(2)).unwrap();
        let g = rnn.bptt_backward(&cache, &Tensor2::zeros(2, 4)).unwrap();
        assert!(g
            .params
            .iter()
            .all(|t| t.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn one_step_rnn_gradient_matches_dense_tanh_layer() {
        let cell = RnnCell::glorot(4, 3, 6);
        let x = filled(5, 4, 0.9);
        let upstream = filled(5, 3, 3.3);
        let seq = SequenceBatch::new(vec![x.clone()]).unwrap();
        let (h, cache) = cell.unroll_forward(&seq, &cell.zero_state(5)).unwrap();
        let g = cell.bptt_backward(&cache, &upstream).unwrap();

        let layer =
            DenseLayer::new(cell.w_xh.clone(), cell.b_h.clone(), ActivationKind::Tanh).unwrap();
        let (dw, db, dx) = layer.backward(&x, &h, &upstream).unwrap();
        assert!(close(&g.params[0], &dw, 1e-14));
        assert!(close(&g.params[2], &db, 1e-14));
        assert!(close(&g.inputs[0], &dx, 1e-14));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let small = LstmCell::glorot(3, 4, 1);
        let big = LstmCell::glorot(3, 5, 1);
        let seq = SequenceBatch::new(vec![filled(2, 3, 0.0)]).unwrap();
        let (_, cache) = small.unroll_forward(&seq, &small.zero_state(2)).unwrap();
        assert!(matches!(
            big.bptt_backward(&cache, &Tensor2::zeros(2, 5)),
            Err(Error::StaleCache(_))
        ));
        assert!(matches!(
            small.bptt_backward(&cache, &Tensor2::zeros(3, 4)),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn feature_rows_split_into_padded_chunks() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]).unwrap();
        let seq = SequenceBatch::from_features(&x, 2).unwrap();
        assert_eq!(seq.input_dim(), 3);
        assert_eq!(seq.steps()[0].row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(seq.steps()[1].row(0), &[4.0, 5.0, 0.0]);
        assert_eq!(SequenceBatch::from_features(&x, 1).unwrap().steps()[0], x);
        assert!(SequenceBatch::from_features(&x, 0).is_err());
    }
}
