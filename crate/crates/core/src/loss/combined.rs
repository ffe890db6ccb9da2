use rand::Rng as _;

use super::transducer::{EmissionGrads, Emissions};
use super::{Gradients, LossConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::FeatureSequence;
use crate::logmath::LogDistribution;
use crate::model::linalg::Matrix;
use crate::model::{
    joint_backward, joint_from_hidden, joint_hidden, pn_backward, pn_unroll_cached, tn_backward,
    tn_forward_cached, ModelParams,
};
use crate::seed::{derive_seed_indexed, rng};
use crate::vocab::{LabelSequence, BLANK};

/// One training pair. `id` keys the masking RNG, so it must be stable across
/// epochs and independent of batch order.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: u64,
    pub x: FeatureSequence,
    pub y: LabelSequence,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    /// Batch mean of `NLL_full + α·NLL_ilm + β·NLL_iam`.
    pub loss: f64,
    pub nll_full: f64,
    pub nll_ilm: f64,
    pub nll_iam: f64,
    /// Gradient of `loss` (already averaged over the batch).
    pub grads: Gradients,
    /// Per example, which prefix positions had `g_u` zeroed.
    pub masks: Vec<Vec<bool>>,
}

/// One Bernoulli(η) draw per prefix position `0..=k_len`.
pub fn draw_mask(seed: u64, example_id: u64, k_len: usize, eta: f64) -> Vec<bool> {
    let mut r = rng(derive_seed_indexed(seed, "mask", example_id));
    (0..=k_len).map(|_| r.random::<f64>() < eta).collect()
}

struct ExampleOutput {
    nll_full: f64,
    nll_ilm: f64,
    nll_iam: f64,
    grads: Gradients,
    mask: Vec<bool>,
}

/// `∂L/∂logits` for a cell whose only non-zero log-prob gradients are at
/// blank (`gb`) and at the target label (`gl`).
fn dlogits(dist: &LogDistribution, gb: f64, label: Option<(usize, f64)>, scale: f64, out: &mut [f64]) {
    let gl = label.map_or(0.0, |(_, g)| g);
    let s = gb + gl;
    for (o, &lp) in out.iter_mut().zip(dist.as_slice()) {
        *o = -lp.exp() * s * scale;
    }
    out[BLANK] += gb * scale;
    if let Some((k, g)) = label {
        out[k] += g * scale;
    }
}

fn example_loss(params: &ModelParams, ex: &Example, cfg: &LossConfig) -> Result<ExampleOutput> {
    let dims = params.dims;
    let (dj, v) = (dims.d_joint, dims.vocab);
    let y = ex.y.ids();
    if let Some(&bad) = y.iter().find(|&&k| k >= v) {
        return Err(Error::usage(format!("example {}: label {bad} outside vocabulary", ex.id)));
    }
    let k_len = y.len();
    let k1 = k_len + 1;
    let mask = draw_mask(cfg.seed, ex.id, k_len, cfg.eta);

    let (enc, etrace) = tn_forward_cached(params, &ex.x)?;
    let (g, ptrace) = pn_unroll_cached(params, y);
    let t_len = enc.frames();

    let mut grads = ModelParams::zeros(dims);
    let mut dh = Matrix::zeros(t_len, dj);
    let mut dg = vec![vec![0.0; dj]; k1];
    let mut dl = vec![0.0; v];
    let mut da = vec![0.0; dj];

    // Full lattice, with masked rows using g_u = 0.
    let mut hidden = Vec::with_capacity(t_len * k1);
    let mut dists = Vec::with_capacity(t_len * k1);
    let mut em = Emissions {
        t_len,
        k_len,
        blank: Vec::with_capacity(t_len * k1),
        label: Vec::with_capacity(t_len * k_len),
    };
    for t in 0..t_len {
        for u in 0..k1 {
            let gu = (!mask[u]).then_some(g[u].as_slice());
            let z = joint_hidden(Some(enc.row(t)), gu, dj);
            let d = joint_from_hidden(params, &z);
            em.blank.push(d.log_prob(BLANK));
            if u < k_len {
                em.label.push(d.log_prob(y[u]));
            }
            hidden.push(z);
            dists.push(d);
        }
    }
    let full: EmissionGrads = em.nll_and_grads();
    for t in 0..t_len {
        for u in 0..k1 {
            let gb = full.blank[t * k1 + u];
            let label = (u < k_len).then(|| (y[u], full.label[t * k_len + u]));
            if gb == 0.0 && label.is_none_or(|(_, g)| g == 0.0) {
                continue;
            }
            let i = t * k1 + u;
            dlogits(&dists[i], gb, label, 1.0, &mut dl);
            joint_backward(params, &hidden[i], &dl, &mut grads, &mut da);
            dh.row_mut(t).iter_mut().zip(&da).for_each(|(a, b)| *a += b);
            if !mask[u] {
                dg[u].iter_mut().zip(&da).for_each(|(a, b)| *a += b);
            }
        }
    }
    drop(dists);
    drop(hidden);

    // Implicit LM: one distribution per prefix, broadcast over frames.
    let ilm_z: Vec<Vec<f64>> = g.iter().map(|gu| joint_hidden(None, Some(gu), dj)).collect();
    let ilm_d: Vec<LogDistribution> = ilm_z.iter().map(|z| joint_from_hidden(params, z)).collect();
    let ilm = broadcast_emissions(t_len, k_len, y, |_, u| &ilm_d[u]).nll_and_grads();
    if cfg.alpha > 0.0 {
        for u in 0..k1 {
            let gb: f64 = (0..t_len).map(|t| ilm.blank[t * k1 + u]).sum();
            let label = (u < k_len).then(|| (y[u], (0..t_len).map(|t| ilm.label[t * k_len + u]).sum()));
            dlogits(&ilm_d[u], gb, label, cfg.alpha, &mut dl);
            joint_backward(params, &ilm_z[u], &dl, &mut grads, &mut da);
            dg[u].iter_mut().zip(&da).for_each(|(a, b)| *a += b);
        }
    }

    // Implicit AM: one distribution per frame, broadcast over prefixes.
    let iam_z: Vec<Vec<f64>> = (0..t_len).map(|t| joint_hidden(Some(enc.row(t)), None, dj)).collect();
    let iam_d: Vec<LogDistribution> = iam_z.iter().map(|z| joint_from_hidden(params, z)).collect();
    let iam = broadcast_emissions(t_len, k_len, y, |t, _| &iam_d[t]).nll_and_grads();
    if cfg.beta > 0.0 {
        for t in 0..t_len {
            let gb: f64 = (0..k1).map(|u| iam.blank[t * k1 + u]).sum();
            let gl: f64 = (0..k_len).map(|u| iam.label[t * k_len + u]).sum();
            // Labels differ across u, so scatter them individually.
            let s = gb + gl;
            for (o, &lp) in dl.iter_mut().zip(iam_d[t].as_slice()) {
                *o = -lp.exp() * s * cfg.beta;
            }
            dl[BLANK] += gb * cfg.beta;
            for u in 0..k_len {
                dl[y[u]] += iam.label[t * k_len + u] * cfg.beta;
            }
            joint_backward(params, &iam_z[t], &dl, &mut grads, &mut da);
            dh.row_mut(t).iter_mut().zip(&da).for_each(|(a, b)| *a += b);
        }
    }

    tn_backward(params, &etrace, &dh, &mut grads);
    pn_backward(params, &ptrace, &dg, &mut grads);

    for (name, v) in [("full", full.nll), ("ilm", ilm.nll), ("iam", iam.nll)] {
        if !v.is_finite() {
            return Err(Error::non_finite(format!("{name} NLL of example {}", ex.id)));
        }
    }
    if !grads.is_finite() {
        return Err(Error::non_finite(format!("gradients of example {}", ex.id)));
    }
    Ok(ExampleOutput {
        nll_full: full.nll,
        nll_ilm: ilm.nll,
        nll_iam: iam.nll,
        grads,
        mask,
    })
}

fn broadcast_emissions<'a>(
    t_len: usize,
    k_len: usize,
    y: &[usize],
    cell: impl Fn(usize, usize) -> &'a LogDistribution,
) -> Emissions {
    let mut blank = Vec::with_capacity(t_len * (k_len + 1));
    let mut label = Vec::with_capacity(t_len * k_len);
    for t in 0..t_len {
        for u in 0..=k_len {
            let d = cell(t, u);
            blank.push(d.log_prob(BLANK));
            if u < k_len {
                label.push(d.log_prob(y[u]));
            }
        }
    }
    Emissions {
        t_len,
        k_len,
        blank,
        label,
    }
}

/// Batch-mean of the three-term objective and its analytic gradient.
///
/// Per-example work runs under `exec`; the reduction always walks examples in
/// batch order, so serial and parallel runs agree bit for bit.
pub fn combined_loss_and_grads(
    params: &ModelParams,
    batch: &[Example],
    cfg: &LossConfig,
    exec: Exec,
) -> Result<LossOutput> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let outs = exec.map(batch, |_, ex| example_loss(params, ex, cfg));
    let n = batch.len() as f64;
    let mut grads = ModelParams::zeros(params.dims);
    let (mut full, mut ilm, mut iam) = (0.0, 0.0, 0.0);
    let mut masks = Vec::with_capacity(batch.len());
    for out in outs {
        let out = out?;
        full += out.nll_full;
        ilm += out.nll_ilm;
        iam += out.nll_iam;
        grads.add_scaled(&out.grads, 1.0);
        masks.push(out.mask);
    }
    grads.scale(1.0 / n);
    let (nll_full, nll_ilm, nll_iam) = (full / n, ilm / n, iam / n);
    let loss = nll_full + cfg.alpha * nll_ilm + cfg.beta * nll_iam;
    if !loss.is_finite() {
        return Err(Error::non_finite("batch loss"));
    }
    Ok(LossOutput {
        loss,
        nll_full,
        nll_ilm,
        nll_iam,
        grads,
        masks,
    })
}
