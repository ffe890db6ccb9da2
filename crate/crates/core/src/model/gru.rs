//! Single-layer gated recurrent unit with a hand-written backward pass.
//!
//! Gate layout in the stacked weights is `[reset; update; candidate]`:
//!
//! ```text
//! r  = σ(W_r x + b_r + U_r h + c_r)
//! z  = σ(W_z x + b_z + U_z h + c_z)
//! n  = tanh(W_n x + b_n + r ⊙ (U_n h + c_n))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use serde::{Deserialize, Serialize};

use super::linalg::{sigmoid, Matrix};
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub w_ih: Matrix,
    pub w_hh: Matrix,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct GruStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `U_n h + c_n`, before the reset gate is applied.
    hn: Vec<f64>,
}

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Gru {
            w_ih: Matrix::zeros(3 * hidden, input),
            w_hh: Matrix::zeros(3 * hidden, hidden),
            b_ih: vec![0.0; 3 * hidden],
            b_hh: vec![0.0; 3 * hidden],
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Gru {
            w_ih: Matrix::uniform(3 * hidden, input, 1.0 / (input as f64).sqrt(), rng),
            w_hh: Matrix::uniform(3 * hidden, hidden, 1.0 / (hidden as f64).sqrt(), rng),
            b_ih: vec![0.0; 3 * hidden],
            b_hh: vec![0.0; 3 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols
    }

    fn gates(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gi = self.b_ih.clone();
        self.w_ih.matvec_acc(x, &mut gi);
        let mut gh = self.b_hh.clone();
        self.w_hh.matvec_acc(h, &mut gh);
        (gi, gh)
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        self.step_cached(x, h).0
    }

    pub fn step_cached(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, GruStep) {
        let d = self.hidden();
        let (gi, gh) = self.gates(x, h);
        let mut r = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut n = vec![0.0; d];
        let mut out = vec![0.0; d];
        for j in 0..d {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[d + j] + gh[d + j]);
            n[j] = (gi[2 * d + j] + r[j] * gh[2 * d + j]).tanh();
            out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
        }
        let cache = GruStep {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            r,
            z,
            n,
            hn: gh[2 * d..].to_vec(),
        };
        (out, cache)
    }

    /// Backward through one step. Accumulates parameter gradients into `grad`
    /// and the input gradient into `dx`; returns the gradient w.r.t. `h_prev`.
    pub fn step_backward(&self, c: &GruStep, dh: &[f64], grad: &mut Gru, dx: &mut [f64]) -> Vec<f64> {
        let d = self.hidden();
        let mut d_ih = vec![0.0; 3 * d];
        let mut d_hh = vec![0.0; 3 * d];
        let mut dh_prev = vec![0.0; d];
        for j in 0..d {
            let dn = dh[j] * (1.0 - c.z[j]);
            let dz = dh[j] * (c.h_prev[j] - c.n[j]);
            dh_prev[j] = dh[j] * c.z[j];
            let dan = dn * (1.0 - c.n[j] * c.n[j]);
            let dr = dan * c.hn[j];
            let dar = dr * c.r[j] * (1.0 - c.r[j]);
            let daz = dz * c.z[j] * (1.0 - c.z[j]);
            d_ih[j] = dar;
            d_ih[d + j] = daz;
            d_ih[2 * d + j] = dan;
            d_hh[j] = dar;
            d_hh[d + j] = daz;
            d_hh[2 * d + j] = dan * c.r[j];
        }
        grad.w_ih.outer_acc(&d_ih, &c.x);
        grad.w_hh.outer_acc(&d_hh, &c.h_prev);
        for j in 0..3 * d {
            grad.b_ih[j] += d_ih[j];
            grad.b_hh[j] += d_hh[j];
        }
        self.w_ih.matvec_t_acc(&d_ih, dx);
        self.w_hh.matvec_t_acc(&d_hh, &mut dh_prev);
        dh_prev
    }
}
