//! Adaptive implicit-LM discounting.
//!
//! For a hypothesis `y` at node `(t, u)` and candidate token `k`:
//!
//! ```text
//! D_adapt(k, y) = (1 − P_roll(y)) · KL(P_ILM ‖ P_IAM)   if k ≠ ε, else 0
//! S_disc(k)     = log P_rnnt(k) − λ · max(0, D_adapt) · log P_ILM(k)
//! P_roll(y + k) = ρ · P_roll(y) + P_ILM(k)
//! ```
//!
//! The KL is a node-level quantity shared by every candidate at that node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::LogDistribution;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountConfig {
    pub lambda: f64,
    pub rho: f64,
    /// `1.0` makes `1 − P_roll` vanish at the start of an utterance.
    #[serde(default = "default_p_roll_init")]
    pub p_roll_init: f64,
    /// Ablation: discount every non-blank token by the constant multiplier 1.
    #[serde(default)]
    pub static_mode: bool,
    /// Non-default variant: `P_roll ← ρ·P_roll + (1 − ρ)·P_ILM`, a true
    /// exponential moving average.
    #[serde(default)]
    pub ema: bool,
}

fn default_p_roll_init() -> f64 {
    1.0
}

impl Default for DiscountConfig {
    fn default() -> Self {
        DiscountConfig {
            lambda: 0.0,
            rho: 0.0,
            p_roll_init: 1.0,
            static_mode: false,
            ema: false,
        }
    }
}

impl DiscountConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("rho must lie in [0, 1]"));
        }
        if !(self.p_roll_init >= 0.0 && self.p_roll_init.is_finite()) {
            return Err(Error::config("p_roll_init must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> RollingState {
        RollingState {
            p_roll: self.p_roll_init,
        }
    }
}

/// Rolling sum of recent ILM probabilities along one hypothesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RollingState {
    pub p_roll: f64,
}

/// `Σ_y p(y) · (log p(y) − log q(y))` over the whole vocabulary, blank
/// included. Zero-mass terms of `p` are skipped; mass of `p` where `q` has
/// none gives `+∞`.
pub fn kl_divergence(p: &LogDistribution, q: &LogDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("KL operands", p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (&lp, &lq) in p.as_slice().iter().zip(q.as_slice()) {
        let prob = lp.exp();
        if prob == 0.0 {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        kl += prob * (lp - lq);
    }
    Ok(kl)
}

/// `ρ · p_roll + P_ILM(emitted)`. Called only on non-blank emissions.
pub fn update_roll(state: RollingState, rho: f64, p_ilm_of_emitted: f64) -> RollingState {
    debug_assert!((0.0..=1.0).contains(&p_ilm_of_emitted));
    RollingState {
        p_roll: rho * state.p_roll + p_ilm_of_emitted,
    }
}

/// Exponential-moving-average variant of [`update_roll`].
pub fn update_roll_ema(state: RollingState, rho: f64, p_ilm_of_emitted: f64) -> RollingState {
    RollingState {
        p_roll: rho * state.p_roll + (1.0 - rho) * p_ilm_of_emitted,
    }
}

pub fn advance_roll(cfg: &DiscountConfig, state: RollingState, p_ilm_of_emitted: f64) -> RollingState {
    if cfg.ema {
        update_roll_ema(state, cfg.rho, p_ilm_of_emitted)
    } else {
        update_roll(state, cfg.rho, p_ilm_of_emitted)
    }
}

/// `(1 − p_roll) · kl` for emitting tokens, `0` for blank. May be negative;
/// [`score_disc`] clamps.
pub fn d_adapt(kl: f64, state: RollingState, token: usize, blank_index: usize) -> f64 {
    if token == blank_index {
        0.0
    } else {
        (1.0 - state.p_roll) * kl
    }
}

/// `log_prnnt − λ · max(0, d) · log_pilm`.
pub fn score_disc(log_prnnt: f64, log_pilm: f64, d: f64, lambda: f64) -> f64 {
    let weight = lambda * d.max(0.0);
    if weight == 0.0 {
        return log_prnnt;
    }
    log_prnnt - weight * log_pilm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> LogDistribution {
        LogDistribution::from_probs(p).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let v = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((v - 0.693147).abs() < 1e-6);
        assert_eq!(
            kl_divergence(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap(),
            f64::INFINITY
        );
        assert!(kl_divergence(&dist(&[1.0]), &dist(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn roll_examples() {
        let s = RollingState { p_roll: 0.7 };
        assert_eq!(update_roll(s, 0.0, 0.35).p_roll, 0.35);
        let v = update_roll(RollingState { p_roll: 1.0 }, 0.5, 0.4).p_roll;
        assert!((v - 0.9).abs() < 1e-15);

        // Constant input c converges to c / (1 − ρ).
        let (c, rho) = (0.3, 0.6);
        let mut s = RollingState { p_roll: 1.0 };
        for _ in 0..100 {
            s = update_roll(s, rho, c);
        }
        assert!((s.p_roll - c / (1.0 - rho)).abs() < 1e-12);
        let e = update_roll_ema(RollingState { p_roll: 1.0 }, 0.5, 0.4);
        assert!((e.p_roll - 0.7).abs() < 1e-15);
    }

    #[test]
    fn d_adapt_examples() {
        let s = RollingState { p_roll: 0.2 };
        assert_eq!(d_adapt(5.0, s, 0, 0), 0.0);
        assert_eq!(d_adapt(5.0, RollingState { p_roll: 1.0 }, 3, 0), 0.0);
        assert!((d_adapt(0.7, s, 2, 0) - 0.56).abs() < 1e-15);
        assert!(d_adapt(0.7, RollingState { p_roll: 1.5 }, 2, 0) < 0.0);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_disc(-2.0, -3.0, 0.5, 0.0), -2.0);
        assert_eq!(score_disc(-2.0, -3.0, -0.5, 1.0), -2.0);
        assert_eq!(score_disc(-2.0, -3.0, 0.0, 1.0), -2.0);
        assert!((score_disc(-2.0, -3.0, 0.5, 1.0) + 0.5).abs() < 1e-15);
        // λ = 0 is exact even against an infinite ILM penalty.
        assert_eq!(score_disc(-2.0, f64::NEG_INFINITY, 0.5, 0.0), -2.0);
    }

    #[test]
    fn config_validation() {
        assert!(DiscountConfig::default().validate().is_ok());
        assert!(DiscountConfig { rho: 1.5, ..Default::default() }.validate().is_err());
        assert!(DiscountConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
    }

    fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn gibbs_inequality(p in probs(5), q in probs(5)) {
            let (p, q) = (LogDistribution::from_probs(&p).unwrap(), LogDistribution::from_probs(&q).unwrap());
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
        }

        #[test]
        fn roll_closed_form(p0 in 0.0f64..2.0, rho in 0.0f64..1.0, xs in prop::collection::vec(0.0f64..1.0, 1..30)) {
            let mut s = RollingState { p_roll: p0 };
            for &x in &xs {
                s = update_roll(s, rho, x);
            }
            let n = xs.len() as i32;
            let closed = rho.powi(n) * p0
                + xs.iter().enumerate().map(|(i, x)| rho.powi(n - 1 - i as i32) * x).sum::<f64>();
            prop_assert!((s.p_roll - closed).abs() < 1e-12);
            prop_assert!(s.p_roll <= p0 * rho.powi(n) + 1.0 / (1.0 - rho) + 1e-12);
        }

        #[test]
        fn rarer_tokens_never_score_lower(lp in -5.0f64..0.0, la in -8.0f64..0.0, lb in -8.0f64..0.0, d in 0.001f64..3.0, lambda in 0.001f64..3.0) {
            let (rare, common) = if la < lb { (la, lb) } else { (lb, la) };
            prop_assert!(score_disc(lp, rare, d, lambda) >= score_disc(lp, common, d, lambda));
            prop_assert!(score_disc(lp, rare, d, lambda) >= lp);
        }
    }
}
