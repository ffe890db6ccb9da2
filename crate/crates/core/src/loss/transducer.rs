//! Forward–backward over the `T × (K+1)` alignment grid.
//!
//! From node `(t, u)` a blank moves to `(t+1, u)` and label `y_{u+1}` moves
//! to `(t, u+1)`. Every alignment ends with the blank out of `(T-1, K)`.

use crate::logmath::log_add_exp;

/// Per-node emission log-probabilities for one target sequence.
pub(crate) struct Emissions {
    pub t_len: usize,
    pub k_len: usize,
    /// `blank[t * (K+1) + u]`
    pub blank: Vec<f64>,
    /// `label[t * K + u]`, the log-probability of `y_{u+1}` at `(t, u)`.
    pub label: Vec<f64>,
}

/// Gradients of the NLL w.r.t. each emission log-probability.
pub(crate) struct EmissionGrads {
    pub nll: f64,
    pub blank: Vec<f64>,
    pub label: Vec<f64>,
}

impl Emissions {
    #[inline]
    fn b(&self, t: usize, u: usize) -> f64 {
        self.blank[t * (self.k_len + 1) + u]
    }

    #[inline]
    fn l(&self, t: usize, u: usize) -> f64 {
        self.label[t * self.k_len + u]
    }

    fn alphas(&self) -> Vec<f64> {
        let (t_len, k1) = (self.t_len, self.k_len + 1);
        let mut alpha = vec![f64::NEG_INFINITY; t_len * k1];
        for t in 0..t_len {
            for u in 0..k1 {
                let v = if t == 0 && u == 0 {
                    0.0
                } else {
                    let from_blank = if t > 0 {
                        alpha[(t - 1) * k1 + u] + self.b(t - 1, u)
                    } else {
                        f64::NEG_INFINITY
                    };
                    let from_label = if u > 0 {
                        alpha[t * k1 + u - 1] + self.l(t, u - 1)
                    } else {
                        f64::NEG_INFINITY
                    };
                    log_add_exp(from_blank, from_label)
                };
                alpha[t * k1 + u] = v;
            }
        }
        alpha
    }

    fn betas(&self) -> Vec<f64> {
        let (t_len, k_len, k1) = (self.t_len, self.k_len, self.k_len + 1);
        let mut beta = vec![f64::NEG_INFINITY; t_len * k1];
        for t in (0..t_len).rev() {
            for u in (0..k1).rev() {
                let v = if t == t_len - 1 && u == k_len {
                    self.b(t, u)
                } else {
                    let via_blank = if t + 1 < t_len {
                        self.b(t, u) + beta[(t + 1) * k1 + u]
                    } else {
                        f64::NEG_INFINITY
                    };
                    let via_label = if u < k_len {
                        self.l(t, u) + beta[t * k1 + u + 1]
                    } else {
                        f64::NEG_INFINITY
                    };
                    log_add_exp(via_blank, via_label)
                };
                beta[t * k1 + u] = v;
            }
        }
        beta
    }

    pub fn nll(&self) -> f64 {
        let alpha = self.alphas();
        let k1 = self.k_len + 1;
        let last = (self.t_len - 1) * k1 + self.k_len;
        -(alpha[last] + self.blank[last])
    }

    pub fn nll_and_grads(&self) -> EmissionGrads {
        let (t_len, k_len, k1) = (self.t_len, self.k_len, self.k_len + 1);
        let alpha = self.alphas();
        let beta = self.betas();
        let last = (t_len - 1) * k1 + k_len;
        let log_z = alpha[last] + self.blank[last];
        let mut blank = vec![0.0; t_len * k1];
        let mut label = vec![0.0; t_len * k_len];
        for t in 0..t_len {
            for u in 0..k1 {
                let a = alpha[t * k1 + u];
                let next_blank = if t + 1 < t_len {
                    beta[(t + 1) * k1 + u]
                } else if u == k_len {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                blank[t * k1 + u] = -(a + self.b(t, u) + next_blank - log_z).exp();
                if u < k_len {
                    label[t * k_len + u] = -(a + self.l(t, u) + beta[t * k1 + u + 1] - log_z).exp();
                }
            }
        }
        EmissionGrads {
            nll: -log_z,
            blank,
            label,
        }
    }
}
