//! Log-domain arithmetic and the normalized log-distribution type.

use crate::error::{Error, Result};

/// Tolerance on `|Σ exp(logp) − 1|` for a distribution to count as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// `log Σ exp(v_i)` with max-subtraction.
///
/// `-∞` entries contribute nothing; an all `-∞` input yields `-∞`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::usage("log_sum_exp of an empty list"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Two-argument `log(e^a + e^b)`, the inner step of every lattice recursion.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Checks that `logp` is a normalized distribution: no NaN or `+∞`, and the
/// probabilities sum to one within [`NORMALIZATION_TOL`].
pub fn validate_log_probs(logp: &[f64]) -> Result<()> {
    if logp.is_empty() {
        return Err(Error::usage("distribution over an empty vocabulary"));
    }
    if logp.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::non_finite("log-distribution entry"));
    }
    let total: f64 = logp.iter().map(|v| v.exp()).sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::usage(format!(
            "log-distribution sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// A normalized distribution over the vocabulary, held as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDistribution {
    logp: Vec<f64>,
}

impl LogDistribution {
    /// Log-softmax of `logits`. Every constructed value is validated in debug
    /// and test builds.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        let logp: Vec<f64> = logits.iter().map(|&l| l - lse).collect();
        // Non-finite logits are reported by the caller's NaN checks instead.
        debug_assert!(
            logits.iter().any(|l| !l.is_finite()) || validate_log_probs(&logp).is_ok(),
            "log-softmax produced an unnormalized distribution: {logp:?}"
        );
        LogDistribution { logp }
    }

    /// Wraps explicit log-probabilities after validating them.
    pub fn from_log_probs(logp: Vec<f64>) -> Result<Self> {
        validate_log_probs(&logp)?;
        Ok(LogDistribution { logp })
    }

    /// Builds from linear probabilities (exact zeros become `-∞`).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        Self::from_log_probs(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(size: usize) -> Self {
        let lp = -(size as f64).ln();
        LogDistribution {
            logp: vec![lp; size],
        }
    }

    #[inline]
    pub fn log_prob(&self, token: usize) -> f64 {
        self.logp[token]
    }

    #[inline]
    pub fn prob(&self, token: usize) -> f64 {
        self.logp[token].exp()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.logp
    }

    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    /// Index of the most probable token; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.logp.iter().enumerate().skip(1) {
            if v > self.logp[best] {
                best = k;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lse_examples() {
        let ninf = f64::NEG_INFINITY;
        assert_eq!(log_sum_exp(&[ninf, ninf]).unwrap(), ninf);
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        assert_eq!(log_sum_exp(&[512.0]).unwrap(), 512.0);
        let ln2 = log_sum_exp(&[0.0, 0.0]).unwrap();
        assert!((ln2 - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((ln2 - 0.693147).abs() < 1e-6);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn lse_no_overflow_at_700() {
        let v = log_sum_exp(&[700.0, 700.0]).unwrap();
        assert!((v - (700.0 + std::f64::consts::LN_2)).abs() < 1e-12);
        let v = log_sum_exp(&[-700.0, -700.0]).unwrap();
        assert!((v - (-700.0 + std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn log_add_exp_matches_lse() {
        for &(a, b) in &[(0.0, 0.0), (-1.0, -30.0), (5.0, -2.0), (f64::NEG_INFINITY, -1.0)] {
            let x = log_add_exp(a, b);
            let y = log_sum_exp(&[a, b]).unwrap();
            assert!((x - y).abs() < 1e-14, "{a} {b}: {x} vs {y}");
        }
    }

    #[test]
    fn distributions_validate() {
        let d = LogDistribution::from_logits(&[1.0, 2.0, 3.0]);
        assert!(validate_log_probs(d.as_slice()).is_ok());
        assert_eq!(d.argmax(), 2);
        let u = LogDistribution::from_logits(&[0.0; 4]);
        for k in 0..4 {
            assert!((u.log_prob(k) + 4f64.ln()).abs() < 1e-15);
        }
        assert!(LogDistribution::from_probs(&[1.0, 0.0]).is_ok());
        assert!(LogDistribution::from_probs(&[0.7, 0.7]).is_err());
        assert!(LogDistribution::from_log_probs(vec![f64::NAN, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn lse_shift_invariance(v in prop::collection::vec(-300.0f64..300.0, 1..12), c in -300.0f64..300.0) {
            let base = log_sum_exp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let s = log_sum_exp(&shifted).unwrap();
            prop_assert!((s - (base + c)).abs() <= 1e-9 * (1.0 + base.abs() + c.abs()));
        }

        #[test]
        fn lse_permutation_and_neg_inf(mut v in prop::collection::vec(-50.0f64..50.0, 1..10)) {
            let base = log_sum_exp(&v).unwrap();
            v.reverse();
            prop_assert!((log_sum_exp(&v).unwrap() - base).abs() < 1e-12);
            v.push(f64::NEG_INFINITY);
            v.rotate_right(1);
            prop_assert!((log_sum_exp(&v).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn softmax_always_normalized(logits in prop::collection::vec(-40.0f64..40.0, 2..32)) {
            let d = LogDistribution::from_logits(&logits);
            prop_assert!(validate_log_probs(d.as_slice()).is_ok());
        }
    }
}
