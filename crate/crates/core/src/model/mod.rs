//! Tiny RNN-T: recurrent transcription network (TN), recurrent prediction
//! network (PN) and an additive joint network.
//!
//! The joint computes `softmax(W · tanh(h_t + g_u) + b)`. Either encoder input
//! may be replaced by the all-zeros vector, which yields the implicit acoustic
//! model (`g_u` masked) or the implicit language model (`h_t` masked).

pub mod checkpoint;
pub mod gru;
pub mod linalg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logmath::LogDistribution;
use crate::seed::{derive_seed, rng, Rng};
use crate::vocab::BLANK;
use gru::{Gru, GruStep};
use linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub d_in: usize,
    /// PN input embedding width.
    pub d_emb: usize,
    pub d_enc: usize,
    pub d_pred: usize,
    pub d_joint: usize,
    /// Vocabulary size including blank.
    pub vocab: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d_in: 8,
            d_emb: 8,
            d_enc: 32,
            d_pred: 32,
            d_joint: 32,
            vocab: 28,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let all = [self.d_in, self.d_emb, self.d_enc, self.d_pred, self.d_joint];
        if all.contains(&0) {
            return Err(Error::config("model dimensions must all be at least 1"));
        }
        if self.vocab < 2 {
            return Err(Error::config("vocabulary size must be at least 2"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let gru = |i: usize, h: usize| 3 * h * (i + h + 2);
        gru(self.d_in, self.d_enc)
            + self.d_joint * (self.d_enc + 1)
            + self.vocab * self.d_emb
            + gru(self.d_emb, self.d_pred)
            + self.d_joint * (self.d_pred + 1)
            + self.vocab * (self.d_joint + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: Matrix::uniform(output, input, 1.0 / (input as f64).sqrt(), rng),
            bias: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        self.weight.matvec_acc(x, &mut y);
        y
    }

    /// Accumulates `dW, db` and adds `Wᵀ dy` into `dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: &mut [f64]) {
        grad.weight.outer_acc(dy, x);
        for (b, d) in grad.bias.iter_mut().zip(dy) {
            *b += d;
        }
        self.weight.matvec_t_acc(dy, dx);
    }
}

/// All trainable weights. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub tn_gru: Gru,
    pub tn_proj: Linear,
    /// Row 0 (the blank slot) is the learned start-of-sequence embedding.
    pub embedding: Matrix,
    pub pn_gru: Gru,
    pub pn_proj: Linear,
    pub joint_out: Linear,
}

/// Read-only view of one named parameter tensor.
pub struct Tensor<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

pub const TENSOR_NAMES: [&str; 15] = [
    "tn.gru.w_ih",
    "tn.gru.w_hh",
    "tn.gru.b_ih",
    "tn.gru.b_hh",
    "tn.proj.weight",
    "tn.proj.bias",
    "pn.embedding",
    "pn.gru.w_ih",
    "pn.gru.w_hh",
    "pn.gru.b_ih",
    "pn.gru.b_hh",
    "pn.proj.weight",
    "pn.proj.bias",
    "joint.out.weight",
    "joint.out.bias",
];

macro_rules! tensor_list {
    ($self:ident, $ctor:ident, $($r:tt)*) => {{
        let p = $self;
        let m = |m: &Matrix| vec![m.rows, m.cols];
        let shapes = [
            m(&p.tn_gru.w_ih), m(&p.tn_gru.w_hh), vec![p.tn_gru.b_ih.len()], vec![p.tn_gru.b_hh.len()],
            m(&p.tn_proj.weight), vec![p.tn_proj.bias.len()],
            m(&p.embedding),
            m(&p.pn_gru.w_ih), m(&p.pn_gru.w_hh), vec![p.pn_gru.b_ih.len()], vec![p.pn_gru.b_hh.len()],
            m(&p.pn_proj.weight), vec![p.pn_proj.bias.len()],
            m(&p.joint_out.weight), vec![p.joint_out.bias.len()],
        ];
        let datas = [
            $($r)* p.tn_gru.w_ih.data, $($r)* p.tn_gru.w_hh.data, $($r)* p.tn_gru.b_ih, $($r)* p.tn_gru.b_hh,
            $($r)* p.tn_proj.weight.data, $($r)* p.tn_proj.bias,
            $($r)* p.embedding.data,
            $($r)* p.pn_gru.w_ih.data, $($r)* p.pn_gru.w_hh.data, $($r)* p.pn_gru.b_ih, $($r)* p.pn_gru.b_hh,
            $($r)* p.pn_proj.weight.data, $($r)* p.pn_proj.bias,
            $($r)* p.joint_out.weight.data, $($r)* p.joint_out.bias,
        ];
        TENSOR_NAMES
            .iter()
            .zip(shapes)
            .zip(datas)
            .map(|((&name, shape), data)| $ctor { name, shape, data })
            .collect()
    }};
}

impl ModelParams {
    /// All-zero parameters; the joint then always yields the uniform distribution.
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            dims,
            tn_gru: Gru::zeros(dims.d_in, dims.d_enc),
            tn_proj: Linear::zeros(dims.d_enc, dims.d_joint),
            embedding: Matrix::zeros(dims.vocab, dims.d_emb),
            pn_gru: Gru::zeros(dims.d_emb, dims.d_pred),
            pn_proj: Linear::zeros(dims.d_pred, dims.d_joint),
            joint_out: Linear::zeros(dims.d_joint, dims.vocab),
        }
    }

    /// Deterministic in `(dims, seed)`: weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut r = rng(derive_seed(seed, "init"));
        let tn_gru = Gru::init(dims.d_in, dims.d_enc, &mut r);
        let tn_proj = Linear::init(dims.d_enc, dims.d_joint, &mut r);
        let embedding = Matrix::uniform(dims.vocab, dims.d_emb, 1.0 / (dims.vocab as f64).sqrt(), &mut r);
        let pn_gru = Gru::init(dims.d_emb, dims.d_pred, &mut r);
        let pn_proj = Linear::init(dims.d_pred, dims.d_joint, &mut r);
        let joint_out = Linear::init(dims.d_joint, dims.vocab, &mut r);
        Ok(ModelParams {
            dims,
            tn_gru,
            tn_proj,
            embedding,
            pn_gru,
            pn_proj,
            joint_out,
        })
    }

    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        tensor_list!(self, Tensor, &)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        tensor_list!(self, TensorMut, &mut)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn check_frame_dim(&self, x: &FeatureSequence) -> Result<()> {
        if x.dim() != self.dims.d_in {
            return Err(Error::dim("feature dimension", self.dims.d_in, x.dim()));
        }
        Ok(())
    }

    fn check_joint_input(&self, v: Option<&[f64]>) -> Result<()> {
        match v {
            Some(v) if v.len() != self.dims.d_joint => {
                Err(Error::dim("joint input", self.dims.d_joint, v.len()))
            }
            _ => Ok(()),
        }
    }
}

/// Encoder rows `h_1..h_T`, each of width `d_joint`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub h: Matrix,
}

impl EncoderOutput {
    pub fn frames(&self) -> usize {
        self.h.rows
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.h.row(t)
    }
}

/// PN recurrent state after a label prefix, with its output `g_u`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorState {
    pub hidden: Vec<f64>,
    pub g: Vec<f64>,
}

/// Causal encoding: row `t` depends only on frames `0..=t`.
pub fn tn_forward(params: &ModelParams, x: &FeatureSequence) -> Result<EncoderOutput> {
    params.check_frame_dim(x)?;
    let mut h = vec![0.0; params.dims.d_enc];
    let mut out = Matrix::zeros(x.frames(), params.dims.d_joint);
    for (t, frame) in x.iter().enumerate() {
        h = params.tn_gru.step(frame, &h);
        out.row_mut(t).copy_from_slice(&params.tn_proj.forward(&h));
    }
    Ok(EncoderOutput { h: out })
}

/// Empty-prefix state: the start embedding fed once from a zero state.
pub fn pn_start(params: &ModelParams) -> PredictorState {
    advance(params, &vec![0.0; params.dims.d_pred], BLANK)
}

pub fn pn_step(params: &ModelParams, state: &PredictorState, label: usize) -> Result<PredictorState> {
    if label == BLANK {
        return Err(Error::usage("blank must never be fed to the prediction network"));
    }
    if label >= params.dims.vocab {
        return Err(Error::usage(format!(
            "label {label} outside a vocabulary of {}",
            params.dims.vocab
        )));
    }
    Ok(advance(params, &state.hidden, label))
}

fn advance(params: &ModelParams, hidden: &[f64], row: usize) -> PredictorState {
    let hidden = params.pn_gru.step(params.embedding.row(row), hidden);
    let g = params.pn_proj.forward(&hidden);
    PredictorState { hidden, g }
}

/// `tanh(h + g)` with absent inputs treated as the zero vector.
pub fn joint_hidden(h: Option<&[f64]>, g: Option<&[f64]>, d_joint: usize) -> Vec<f64> {
    let mut z = vec![0.0; d_joint];
    if let Some(h) = h {
        z.copy_from_slice(h);
    }
    if let Some(g) = g {
        z.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    z.iter_mut().for_each(|a| *a = a.tanh());
    z
}

pub(crate) fn joint_from_hidden(params: &ModelParams, z: &[f64]) -> LogDistribution {
    LogDistribution::from_logits(&params.joint_out.forward(z))
}

/// `P_rnnt` when both inputs are given, `P_IAM` with `g = None`, `P_ILM` with
/// `h = None`.
pub fn joint_dist(params: &ModelParams, h: Option<&[f64]>, g: Option<&[f64]>) -> Result<LogDistribution> {
    params.check_joint_input(h)?;
    params.check_joint_input(g)?;
    let z = joint_hidden(h, g, params.dims.d_joint);
    Ok(joint_from_hidden(params, &z))
}

/// Backward through the joint for one distribution, given `∂L/∂logits`.
pub(crate) fn joint_backward(
    params: &ModelParams,
    z: &[f64],
    dlogits: &[f64],
    grad: &mut ModelParams,
    da: &mut [f64],
) {
    let mut dz = vec![0.0; z.len()];
    params.joint_out.backward(z, dlogits, &mut grad.joint_out, &mut dz);
    for ((a, dz), z) in da.iter_mut().zip(&dz).zip(z) {
        *a = dz * (1.0 - z * z);
    }
}

/// Forward TN with everything needed for backpropagation through time.
pub(crate) struct EncoderTrace {
    steps: Vec<GruStep>,
    hidden: Vec<Vec<f64>>,
}

pub(crate) fn tn_forward_cached(params: &ModelParams, x: &FeatureSequence) -> Result<(EncoderOutput, EncoderTrace)> {
    params.check_frame_dim(x)?;
    let mut h = vec![0.0; params.dims.d_enc];
    let mut out = Matrix::zeros(x.frames(), params.dims.d_joint);
    let mut steps = Vec::with_capacity(x.frames());
    let mut hidden = Vec::with_capacity(x.frames());
    for (t, frame) in x.iter().enumerate() {
        let (next, cache) = params.tn_gru.step_cached(frame, &h);
        h = next;
        out.row_mut(t).copy_from_slice(&params.tn_proj.forward(&h));
        steps.push(cache);
        hidden.push(h.clone());
    }
    Ok((EncoderOutput { h: out }, EncoderTrace { steps, hidden }))
}

pub(crate) fn tn_backward(params: &ModelParams, trace: &EncoderTrace, d_out: &Matrix, grad: &mut ModelParams) {
    let d_enc = params.dims.d_enc;
    let mut dx = vec![0.0; params.dims.d_in];
    let mut carry = vec![0.0; d_enc];
    for t in (0..trace.steps.len()).rev() {
        let mut dh = carry;
        params
            .tn_proj
            .backward(&trace.hidden[t], d_out.row(t), &mut grad.tn_proj, &mut dh);
        dx.iter_mut().for_each(|v| *v = 0.0);
        carry = params
            .tn_gru
            .step_backward(&trace.steps[t], &dh, &mut grad.tn_gru, &mut dx);
    }
}

pub(crate) struct PredictorTrace {
    rows: Vec<usize>,
    steps: Vec<GruStep>,
    hidden: Vec<Vec<f64>>,
}

/// Unrolls the PN over `[start, y_1, ..., y_K]`, returning `g_0..g_K`.
pub(crate) fn pn_unroll_cached(params: &ModelParams, labels: &[usize]) -> (Vec<Vec<f64>>, PredictorTrace) {
    let mut rows = Vec::with_capacity(labels.len() + 1);
    rows.push(BLANK);
    rows.extend_from_slice(labels);
    let mut h = vec![0.0; params.dims.d_pred];
    let mut g = Vec::with_capacity(rows.len());
    let mut steps = Vec::with_capacity(rows.len());
    let mut hidden = Vec::with_capacity(rows.len());
    for &row in &rows {
        let (next, cache) = params.pn_gru.step_cached(params.embedding.row(row), &h);
        h = next;
        g.push(params.pn_proj.forward(&h));
        steps.push(cache);
        hidden.push(h.clone());
    }
    (g, PredictorTrace { rows, steps, hidden })
}

pub(crate) fn pn_backward(params: &ModelParams, trace: &PredictorTrace, d_g: &[Vec<f64>], grad: &mut ModelParams) {
    let mut carry = vec![0.0; params.dims.d_pred];
    let mut dx = vec![0.0; params.dims.d_emb];
    for u in (0..trace.steps.len()).rev() {
        let mut dh = carry;
        params
            .pn_proj
            .backward(&trace.hidden[u], &d_g[u], &mut grad.pn_proj, &mut dh);
        dx.iter_mut().for_each(|v| *v = 0.0);
        carry = params
            .pn_gru
            .step_backward(&trace.steps[u], &dh, &mut grad.pn_gru, &mut dx);
        for (e, d) in grad.embedding.row_mut(trace.rows[u]).iter_mut().zip(&dx) {
            *e += d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmath::validate_log_probs;

    fn dims() -> ModelDims {
        ModelDims {
            d_in: 3,
            d_emb: 2,
            d_enc: 4,
            d_pred: 4,
            d_joint: 5,
            vocab: 4,
        }
    }

    fn feats(t: usize, seed: u64) -> FeatureSequence {
        use rand::Rng as _;
        let mut r = rng(seed);
        FeatureSequence::new(
            (0..t)
                .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::init(dims(), 11).unwrap();
        let b = ModelParams::init(dims(), 11).unwrap();
        let c = ModelParams::init(dims(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.param_count(), dims().param_count());
        assert!(a.joint_out.bias.iter().all(|&b| b == 0.0));
        let bound = 1.0 / (dims().d_joint as f64).sqrt();
        assert!(a.joint_out.weight.data.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn tensor_views_cover_every_parameter_once() {
        let mut p = ModelParams::init(dims(), 1).unwrap();
        let names: Vec<_> = p.tensors().iter().map(|t| t.name).collect();
        assert_eq!(names, TENSOR_NAMES);
        for t in p.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 1.0);
        }
        assert_eq!(p.l2_norm(), (dims().param_count() as f64).sqrt());
    }

    #[test]
    fn zero_weights_give_uniform_and_zero_encoder() {
        let p = ModelParams::zeros(dims());
        let x = feats(3, 1);
        let enc = tn_forward(&p, &x).unwrap();
        assert!(enc.h.data.iter().all(|&v| v == 0.0));
        let g = pn_start(&p).g;
        let d = joint_dist(&p, Some(enc.row(0)), Some(&g)).unwrap();
        for k in 0..4 {
            assert!((d.log_prob(k) + 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn encoder_shape_and_causality() {
        let p = ModelParams::init(dims(), 2).unwrap();
        let x = feats(6, 5);
        assert_eq!(tn_forward(&p, &x.prefix(1).unwrap()).unwrap().frames(), 1);
        let full = tn_forward(&p, &x).unwrap();
        for t in 1..=6 {
            let part = tn_forward(&p, &x.prefix(t).unwrap()).unwrap();
            for r in 0..t {
                assert_eq!(part.row(r), full.row(r));
            }
        }
        let wrong = FeatureSequence::new(vec![vec![0.0; 2]]).unwrap();
        assert!(matches!(tn_forward(&p, &wrong), Err(Error::Dimension { .. })));
    }

    #[test]
    fn predictor_contract() {
        let p = ModelParams::init(dims(), 3).unwrap();
        let s0 = pn_start(&p);
        assert_eq!(s0, pn_start(&p));
        assert!(pn_step(&p, &s0, BLANK).is_err());
        assert!(pn_step(&p, &s0, 4).is_err());
        assert_eq!(pn_step(&p, &s0, 2).unwrap(), pn_step(&p, &s0, 2).unwrap());

        let labels = [1, 3, 2, 2];
        let mut s = s0.clone();
        let mut stepwise = vec![s.g.clone()];
        for &y in &labels {
            s = pn_step(&p, &s, y).unwrap();
            stepwise.push(s.g.clone());
        }
        let (batch, _) = pn_unroll_cached(&p, &labels);
        assert_eq!(stepwise, batch);
    }

    #[test]
    fn joint_modes() {
        let mut p = ModelParams::init(dims(), 4).unwrap();
        p.joint_out.bias = vec![0.3, -0.2, 0.5, 0.0];
        let x = feats(4, 9);
        let enc = tn_forward(&p, &x).unwrap();
        let s0 = pn_start(&p);
        let s1 = pn_step(&p, &s0, 1).unwrap();

        // P_IAM at a frame is the same whichever prefix is current.
        for t in 0..4 {
            let a = joint_dist(&p, Some(enc.row(t)), None).unwrap();
            assert!(validate_log_probs(a.as_slice()).is_ok());
            let _ = &s1;
            assert_eq!(a, joint_dist(&p, Some(enc.row(t)), None).unwrap());
        }
        // P_ILM for a prefix is frame-invariant by construction.
        let ilm = joint_dist(&p, None, Some(&s1.g)).unwrap();
        assert!(validate_log_probs(ilm.as_slice()).is_ok());

        // Both masked: softmax of the output bias.
        let both = joint_dist(&p, None, None).unwrap();
        let expect = LogDistribution::from_logits(&p.joint_out.bias);
        for k in 0..4 {
            assert!((both.log_prob(k) - expect.log_prob(k)).abs() < 1e-15);
        }
        assert!(joint_dist(&p, Some(&[0.0; 3]), None).is_err());
    }
}
