//! Desk-scale RNN-Transducer toolkit: a tiny trainable transducer with
//! implicit-LM / implicit-AM auxiliary losses and random PN-output masking,
//! alignment-length synchronous beam search with adaptive implicit-LM
//! discounting, n-gram fusion baselines and rare-word evaluation.

pub mod data;
pub mod decode;
pub mod discount;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod logmath;
pub mod lm;
pub mod loss;
pub mod model;
pub mod seed;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
pub use exec::Exec;
pub use features::FeatureSequence;
pub use logmath::{log_sum_exp, LogDistribution};
pub use vocab::{decode_labels, encode_transcript, LabelSequence, Vocabulary, BLANK};
