//! Transducer loss, the implicit-LM / implicit-AM auxiliary losses, masking of
//! the PN output, analytic gradients and plain gradient descent.

mod combined;
pub mod gradcheck;
mod transducer;

pub use combined::{combined_loss_and_grads, draw_mask, Example, LossOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::logmath::LogDistribution;
use crate::model::{joint_dist, pn_unroll_cached, tn_forward, ModelParams};
use crate::vocab::{LabelSequence, BLANK};
use transducer::Emissions;

/// Gradient container; same tensor layout as the parameters.
pub type Gradients = ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeMode {
    /// `P_rnnt(· | h_t ⊕ g_u)`, with masked rows using `g_u = 0`.
    Full,
    /// `P_ILM(· | 0 ⊕ g_u)`, broadcast over frames.
    Ilm,
    /// `P_IAM(· | h_t ⊕ 0)`, broadcast over prefix lengths.
    Iam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the implicit-LM transducer loss.
    pub alpha: f64,
    /// Weight of the implicit-AM transducer loss.
    pub beta: f64,
    /// Probability of zeroing `g_u` in the full lattice, per prefix position.
    pub eta: f64,
    /// Run seed for the masking streams; set from the run configuration.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.125,
            beta: 0.125,
            eta: 0.2,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("alpha and beta must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::config("eta must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One distribution per `(t, u)` node, `t < T`, `u ≤ K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    t_len: usize,
    k_len: usize,
    cells: Vec<LogDistribution>,
}

impl Lattice {
    /// `cells` in row-major `(t, u)` order.
    pub fn from_cells(t_len: usize, k_len: usize, cells: Vec<LogDistribution>) -> Result<Self> {
        if t_len == 0 {
            return Err(Error::usage("lattice needs at least one frame"));
        }
        if cells.len() != t_len * (k_len + 1) {
            return Err(Error::dim("lattice cells", t_len * (k_len + 1), cells.len()));
        }
        let v = cells[0].len();
        if cells.iter().any(|c| c.len() != v) {
            return Err(Error::usage("lattice cells disagree on vocabulary size"));
        }
        Ok(Lattice { t_len, k_len, cells })
    }

    pub fn frames(&self) -> usize {
        self.t_len
    }

    pub fn labels(&self) -> usize {
        self.k_len
    }

    pub fn vocab(&self) -> usize {
        self.cells[0].len()
    }

    pub fn cell(&self, t: usize, u: usize) -> &LogDistribution {
        &self.cells[t * (self.k_len + 1) + u]
    }

    fn emissions(&self, y: &LabelSequence) -> Result<Emissions> {
        if y.len() != self.k_len {
            return Err(Error::dim("label sequence length", self.k_len, y.len()));
        }
        if let Some(&bad) = y.ids().iter().find(|&&k| k >= self.vocab()) {
            return Err(Error::usage(format!("label {bad} outside the lattice vocabulary")));
        }
        let k1 = self.k_len + 1;
        let mut blank = Vec::with_capacity(self.t_len * k1);
        let mut label = Vec::with_capacity(self.t_len * self.k_len);
        for t in 0..self.t_len {
            for u in 0..k1 {
                let cell = self.cell(t, u);
                blank.push(cell.log_prob(BLANK));
                if u < self.k_len {
                    label.push(cell.log_prob(y.ids()[u]));
                }
            }
        }
        Ok(Emissions {
            t_len: self.t_len,
            k_len: self.k_len,
            blank,
            label,
        })
    }
}

/// Dense `∂NLL/∂ log p[t][u][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrads {
    pub t_len: usize,
    pub k_len: usize,
    pub vocab: usize,
    pub data: Vec<f64>,
}

impl CellGrads {
    pub fn get(&self, t: usize, u: usize, k: usize) -> f64 {
        self.data[(t * (self.k_len + 1) + u) * self.vocab + k]
    }
}

/// Lattice of distributions selected per `mode` and per-row `mask_pn`
/// (only consulted in full mode).
pub fn build_lattice(
    params: &ModelParams,
    x: &FeatureSequence,
    y: &LabelSequence,
    mode: LatticeMode,
    mask_pn: &[bool],
) -> Result<Lattice> {
    let k_len = y.len();
    if mask_pn.len() != k_len + 1 {
        return Err(Error::dim("PN mask length", k_len + 1, mask_pn.len()));
    }
    let enc = tn_forward(params, x)?;
    let (g, _) = pn_unroll_cached(params, y.ids());
    let t_len = enc.frames();
    let mut cells = Vec::with_capacity(t_len * (k_len + 1));
    for t in 0..t_len {
        for u in 0..=k_len {
            let (h, gu) = match mode {
                LatticeMode::Full => (Some(enc.row(t)), (!mask_pn[u]).then_some(g[u].as_slice())),
                LatticeMode::Ilm => (None, Some(g[u].as_slice())),
                LatticeMode::Iam => (Some(enc.row(t)), None),
            };
            cells.push(joint_dist(params, h, gu)?);
        }
    }
    Lattice::from_cells(t_len, k_len, cells)
}

/// `−log Σ_alignments Π emissions`, by the forward recursion in log domain.
pub fn transducer_nll(lattice: &Lattice, y: &LabelSequence) -> Result<f64> {
    Ok(lattice.emissions(y)?.nll())
}

/// Forward–backward gradient of [`transducer_nll`] w.r.t. every cell entry.
pub fn transducer_nll_grad(lattice: &Lattice, y: &LabelSequence) -> Result<CellGrads> {
    let em = lattice.emissions(y)?;
    let g = em.nll_and_grads();
    let (t_len, k_len, v) = (lattice.t_len, lattice.k_len, lattice.vocab());
    let mut data = vec![0.0; t_len * (k_len + 1) * v];
    for t in 0..t_len {
        for u in 0..=k_len {
            let base = (t * (k_len + 1) + u) * v;
            data[base + BLANK] = g.blank[t * (k_len + 1) + u];
            if u < k_len {
                data[base + y.ids()[u]] += g.label[t * k_len + u];
            }
        }
    }
    Ok(CellGrads {
        t_len,
        k_len,
        vocab: v,
        data,
    })
}

/// `params ← params − lr · grads`.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::usage(format!("learning rate {lr} must be finite and non-negative")));
    }
    if params.dims != grads.dims {
        return Err(Error::usage("gradient shapes do not match the parameters"));
    }
    params.add_scaled(grads, -lr);
    Ok(())
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
