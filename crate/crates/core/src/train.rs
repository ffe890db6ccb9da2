//! Minibatch training: shuffled epochs of the combined loss, global-norm
//! clipping and fixed-rate gradient descent.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::loss::{clip_grad_norm, combined_loss_and_grads, sgd_step, Example, LossConfig};
use crate::model::ModelParams;
use crate::seed::{derive_seed_indexed, rng};
use crate::vocab::{encode_transcript, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            lr: 1e-4,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be finite and non-negative"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("clip_norm must be positive"));
        }
        Ok(())
    }
}

/// Per-example means over one epoch. `grad_norm` is the mean pre-clipping
/// batch gradient norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub nll_full: f64,
    pub nll_ilm: f64,
    pub nll_iam: f64,
    pub grad_norm: f64,
    pub wall_ms: u128,
}

impl EpochStats {
    /// `epoch, loss, full, ilm, iam, wall ms`, tab-separated.
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            self.epoch, self.loss, self.nll_full, self.nll_ilm, self.nll_iam, self.wall_ms
        )
    }
}

pub const LOG_HEADER: &str = "epoch\tloss\tnll_full\tnll_ilm\tnll_iam\twall_ms";

/// Encodes a corpus for training. Example ids are corpus positions, which key
/// the per-example masking streams.
pub fn examples_from_corpus(corpus: &[Utterance], vocab: &Vocabulary) -> Result<Vec<Example>> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let y = encode_transcript(&u.transcript, vocab).map_err(|e| Error::usage(format!("utterance {}: {e}", u.id)))?;
            Ok(Example {
                id: i as u64,
                x: u.features.clone(),
                y,
            })
        })
        .collect()
}

/// One pass over `examples` in an order shuffled by `(loss.seed, epoch)`.
/// `epoch` is 0-based; masks for the epoch use their own derived seed.
pub fn train_epoch(
    params: &mut ModelParams,
    examples: &[Example],
    loss: &LossConfig,
    cfg: &TrainConfig,
    epoch: usize,
    exec: Exec,
) -> Result<EpochStats> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::usage("cannot train on an empty corpus"));
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng(derive_seed_indexed(loss.seed, "shuffle", epoch as u64)));
    let epoch_loss = LossConfig {
        seed: derive_seed_indexed(loss.seed, "mask", epoch as u64),
        ..*loss
    };

    let mut sums = [0.0; 4];
    let mut norm_sum = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
        let mut out = combined_loss_and_grads(params, &batch, &epoch_loss, exec).map_err(|e| match e {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("epoch {}: {context}", epoch + 1),
            },
            other => other,
        })?;
        let n = batch.len() as f64;
        for (s, v) in sums.iter_mut().zip([out.loss, out.nll_full, out.nll_ilm, out.nll_iam]) {
            *s += v * n;
        }
        norm_sum += clip_grad_norm(&mut out.grads, cfg.clip_norm);
        batches += 1;
        sgd_step(params, &out.grads, cfg.lr)?;
        if !params.is_finite() {
            return Err(Error::NonFinite {
                context: format!("epoch {}: parameters after update of batch {batches}", epoch + 1),
            });
        }
    }
    let n = examples.len() as f64;
    Ok(EpochStats {
        epoch: epoch + 1,
        loss: sums[0] / n,
        nll_full: sums[1] / n,
        nll_ilm: sums[2] / n,
        nll_iam: sums[3] / n,
        grad_norm: norm_sum / batches as f64,
        wall_ms: start.elapsed().as_millis(),
    })
}

/// Runs epochs `start_epoch .. cfg.epochs` (0-based), calling `on_epoch` after
/// each one, e.g. to checkpoint.
pub fn train(
    params: &mut ModelParams,
    examples: &[Example],
    loss: &LossConfig,
    cfg: &TrainConfig,
    start_epoch: usize,
    exec: Exec,
    mut on_epoch: impl FnMut(&ModelParams, &EpochStats) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    loss.validate()?;
    let mut stats = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let s = train_epoch(params, examples, loss, cfg, epoch, exec)?;
        on_epoch(params, &s)?;
        stats.push(s);
    }
    Ok(stats)
}

/// Trailing `window`-epoch means of `losses` (one value per complete window).
pub fn moving_average(losses: &[f64], window: usize) -> Vec<f64> {
    losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_corpus, CorpusSpec};
    use crate::model::ModelDims;

    fn setup(utterances: usize) -> (ModelParams, Vec<Example>) {
        let spec = CorpusSpec {
            utterances,
            max_words: 2,
            ..CorpusSpec::default()
        };
        let vocab = spec.vocabulary().unwrap();
        let examples = examples_from_corpus(&gen_corpus(&spec).unwrap(), &vocab).unwrap();
        let dims = ModelDims {
            d_enc: 16,
            d_pred: 16,
            d_joint: 16,
            ..ModelDims::default()
        };
        (ModelParams::init(dims, 3).unwrap(), examples)
    }

    #[test]
    fn moving_average_windows() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(moving_average(&[1.0], 5).is_empty());
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let (init, examples) = setup(12);
        let loss = LossConfig::default();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 5,
            lr: 0.05,
            ..TrainConfig::default()
        };
        let mut a = init.clone();
        let full = train(&mut a, &examples, &loss, &cfg, 0, Exec::Serial, |_, _| Ok(())).unwrap();

        let mut b = init.clone();
        let first = train(&mut b, &examples, &loss, &TrainConfig { epochs: 2, ..cfg }, 0, Exec::Serial, |_, _| Ok(())).unwrap();
        let resumed = train(&mut b, &examples, &loss, &cfg, 2, Exec::Parallel, |_, _| Ok(())).unwrap();
        assert_eq!(first[1].loss, full[1].loss);
        assert_eq!(resumed.len(), 1);
        assert_eq!(resumed[0].epoch, 3);
        assert_eq!(resumed[0].loss, full[2].loss);
        assert_eq!(a, b);
    }

    #[test]
    fn auxiliary_losses_are_reported_even_when_unweighted() {
        let (mut p, examples) = setup(4);
        let loss = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            eta: 0.0,
            seed: 0,
        };
        let s = train_epoch(&mut p, &examples, &loss, &TrainConfig::default(), 0, Exec::Serial).unwrap();
        assert!(s.nll_ilm > 0.0 && s.nll_iam > 0.0);
        assert_eq!(s.loss, s.nll_full);
        assert_eq!(s.log_line().split('\t').count(), LOG_HEADER.split('\t').count());
    }

    #[test]
    fn loss_moving_average_decreases_on_a_small_corpus() {
        let (mut p, examples) = setup(50);
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 50,
            lr: 0.05,
            ..TrainConfig::default()
        };
        let stats = train(&mut p, &examples, &LossConfig::default(), &cfg, 0, Exec::Parallel, |_, _| Ok(())).unwrap();
        let losses: Vec<f64> = stats.iter().map(|s| s.loss).collect();
        let ma = moving_average(&losses, 5);
        for (i, w) in ma.windows(2).enumerate() {
            assert!(w[1] < w[0], "moving average rose after epoch {}: {} -> {}", i + 5, w[0], w[1]);
        }
    }

    #[test]
    fn diverging_training_reports_the_epoch() {
        let (mut p, examples) = setup(4);
        p.joint_out.bias[1] = f64::NAN;
        let err = train_epoch(&mut p, &examples, &LossConfig::default(), &TrainConfig::default(), 6, Exec::Serial).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epoch 7") && msg.contains("example"), "{msg}");
    }
}
