//! Central finite-difference verification of the combined-loss gradient.

use super::{combined_loss_and_grads, Example, LossConfig};
use crate::error::Result;
use crate::exec::Exec;
use crate::model::ModelParams;

/// Pass threshold on the per-tensor maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPSILON: f64 = 1e-4;
/// Denominator floor for the relative error. Central differences carry
/// roughly `1e-16·|L|/ε` of cancellation noise, so entries with |grad| below
/// this floor are effectively judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: &'static str,
    pub len: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.max_rel_err < self.tolerance)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares the analytic gradient against `(L(θ+ε) − L(θ−ε)) / 2ε` for every
/// parameter. `corrupt` perturbs one analytic entry (tensor index, element)
/// before comparison; it exists to prove the check can fail.
pub fn gradient_check(
    params: &ModelParams,
    batch: &[Example],
    cfg: &LossConfig,
    eps: f64,
    corrupt: Option<(usize, usize)>,
) -> Result<GradCheckReport> {
    let mut analytic = combined_loss_and_grads(params, batch, cfg, Exec::Serial)?.grads;
    if let Some((ti, ei)) = corrupt {
        let mut ts = analytic.tensors_mut();
        let t = &mut ts[ti];
        t.data[ei] += 1e-2 * (1.0 + t.data[ei].abs());
    }
    let mut probe = params.clone();
    let n_tensors = params.tensors().len();
    let mut tensors = Vec::with_capacity(n_tensors);
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].data.len();
        let name = params.tensors()[ti].name;
        let mut check = TensorCheck {
            name,
            len,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
        };
        for ei in 0..len {
            let orig = params.tensors()[ti].data[ei];
            probe.tensors_mut()[ti].data[ei] = orig + eps;
            let plus = combined_loss_and_grads(&probe, batch, cfg, Exec::Serial)?.loss;
            probe.tensors_mut()[ti].data[ei] = orig - eps;
            let minus = combined_loss_and_grads(&probe, batch, cfg, Exec::Serial)?.loss;
            probe.tensors_mut()[ti].data[ei] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.tensors()[ti].data[ei];
            let rel = relative_error(a, numeric);
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst_index = ei;
            }
            check.max_abs_err = check.max_abs_err.max((a - numeric).abs());
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        tensors,
        tolerance: GRADCHECK_TOLERANCE,
    })
}
