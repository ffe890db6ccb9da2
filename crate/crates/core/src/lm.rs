//! Add-k smoothed character n-gram LM, the external LM of the shallow-fusion
//! and density-ratio baselines.
//!
//! Outcome slot 0 (blank's index) doubles as the end-of-sentence symbol and,
//! inside contexts, as the begin-of-sentence pad. Blank itself never occurs in
//! label sequences, so the reuse is unambiguous.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{LabelSequence, Vocabulary, BLANK};

pub const FORMAT_VERSION: u32 = 1;
const BOUNDARY: usize = BLANK;

#[derive(Clone, Debug, PartialEq)]
pub struct NGramLM {
    order: usize,
    add_k: f64,
    vocab_size: usize,
    vocab_hash: String,
    /// Context (exactly `order − 1` ids) → outcome counts, indexed by token id
    /// with slot 0 = end of sentence.
    counts: BTreeMap<Vec<usize>, Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LmFile {
    format_version: u32,
    order: usize,
    add_k: f64,
    vocab_size: usize,
    vocab_hash: String,
    contexts: Vec<ContextCounts>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextCounts {
    context: Vec<usize>,
    counts: Vec<u64>,
}

pub fn train_ngram(corpus: &[LabelSequence], vocab: &Vocabulary, order: usize, add_k: f64) -> Result<NGramLM> {
    if order == 0 {
        return Err(Error::config("n-gram order must be at least 1"));
    }
    if !(add_k > 0.0 && add_k.is_finite()) {
        return Err(Error::config("add_k must be positive"));
    }
    let v = vocab.size();
    let mut counts: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
    for seq in corpus {
        let mut padded = vec![BOUNDARY; order - 1];
        padded.extend_from_slice(seq.ids());
        if let Some(&bad) = seq.ids().iter().find(|&&k| k >= v) {
            return Err(Error::usage(format!("token {bad} outside the LM vocabulary")));
        }
        for i in 0..=seq.len() {
            let ctx = padded[i..i + order - 1].to_vec();
            let outcome = seq.ids().get(i).copied().unwrap_or(BOUNDARY);
            counts.entry(ctx).or_insert_with(|| vec![0; v])[outcome] += 1;
        }
    }
    Ok(NGramLM {
        order,
        add_k,
        vocab_size: v,
        vocab_hash: vocab.content_hash(),
        counts,
    })
}

impl NGramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    fn context(&self, history: &[usize]) -> Vec<usize> {
        let n = self.order - 1;
        let mut ctx = vec![BOUNDARY; n.saturating_sub(history.len())];
        ctx.extend_from_slice(&history[history.len().saturating_sub(n)..]);
        ctx
    }

    fn outcome_log_prob(&self, outcome: usize, history: &[usize]) -> f64 {
        let v = self.vocab_size as f64;
        let (c, total) = match self.counts.get(&self.context(history)) {
            Some(row) => (row[outcome] as f64, row.iter().sum::<u64>() as f64),
            None => (0.0, 0.0),
        };
        ((c + self.add_k) / (total + self.add_k * v)).ln()
    }

    /// `log P(token | last order−1 tokens of history)`.
    pub fn log_prob(&self, token: usize, history: &[usize]) -> Result<f64> {
        if token == BLANK {
            return Err(Error::usage("the external LM has no blank symbol"));
        }
        if token >= self.vocab_size {
            return Err(Error::usage(format!("token {token} outside the LM vocabulary")));
        }
        Ok(self.outcome_log_prob(token, history))
    }

    /// `log P(end of sentence | history)`.
    pub fn end_log_prob(&self, history: &[usize]) -> f64 {
        self.outcome_log_prob(BOUNDARY, history)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = LmFile {
            format_version: FORMAT_VERSION,
            order: self.order,
            add_k: self.add_k,
            vocab_size: self.vocab_size,
            vocab_hash: self.vocab_hash.clone(),
            contexts: self
                .counts
                .iter()
                .map(|(context, counts)| ContextCounts {
                    context: context.clone(),
                    counts: counts.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: LmFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported LM format version {}",
                file.format_version
            )));
        }
        if file.order == 0 || !(file.add_k > 0.0) {
            return Err(Error::config("LM file has invalid order or add_k"));
        }
        let mut counts = BTreeMap::new();
        for c in file.contexts {
            if c.context.len() != file.order - 1 || c.counts.len() != file.vocab_size {
                return Err(Error::config("LM count table has inconsistent shapes"));
            }
            counts.insert(c.context, c.counts);
        }
        Ok(NGramLM {
            order: file.order,
            add_k: file.add_k,
            vocab_size: file.vocab_size,
            vocab_hash: file.vocab_hash,
            counts,
        })
    }

    /// Errors unless the LM was trained over `vocab`.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_hash != vocab.content_hash() {
            return Err(Error::config("LM was trained with a different vocabulary"));
        }
        Ok(())
    }
}

pub fn lm_logprob(lm: &NGramLM, token: usize, history: &LabelSequence) -> Result<f64> {
    lm.log_prob(token, history.ids())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::encode_transcript;
    use proptest::prelude::*;

    fn seqs(texts: &[&str], v: &Vocabulary) -> Vec<LabelSequence> {
        texts.iter().map(|t| encode_transcript(t, v).unwrap()).collect()
    }

    #[test]
    fn empty_corpus_is_uniform() {
        let v = Vocabulary::from_alphabet("abc").unwrap();
        let lm = train_ngram(&[], &v, 3, 1.0).unwrap();
        for k in 1..4 {
            assert!((lm.log_prob(k, &[1, 2]).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        }
        let uni = train_ngram(&[], &v, 1, 1.0).unwrap();
        assert!((uni.log_prob(2, &[]).unwrap() + 4f64.ln()).abs() < 1e-15);
        assert!(uni.log_prob(BLANK, &[]).is_err());
    }

    #[test]
    fn bigram_on_repeated_char() {
        // <s> a a </s>: count(a→a) = 1, count(a→</s>) = 1, outcomes {a, b, </s>}.
        let v = Vocabulary::from_alphabet("ab").unwrap();
        let lm = train_ngram(&seqs(&["aa"], &v), &v, 2, 1.0).unwrap();
        assert!((lm.log_prob(1, &[1]).unwrap() - (2.0f64 / 5.0).ln()).abs() < 1e-15);
        assert!((lm.log_prob(2, &[1]).unwrap() - (1.0f64 / 5.0).ln()).abs() < 1e-15);
        assert!((lm.end_log_prob(&[1]) - (2.0f64 / 5.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn bigram_on_toy_corpus() {
        // "ab", "ba", "aab" with add-0.5 over outcomes {a, b, </s>}:
        //   ctx <s>: a×2, b×1            total 3
        //   ctx a  : b×2, </s>×1, a×1    total 4
        //   ctx b  : a×1, </s>×2         total 3
        let v = Vocabulary::from_alphabet("ab").unwrap();
        let lm = train_ngram(&seqs(&["ab", "ba", "aab"], &v), &v, 2, 0.5).unwrap();
        let close = |a: f64, b: f64| (a - b.ln()).abs() < 1e-15;
        assert!(close(lm.log_prob(1, &[]).unwrap(), 2.5 / 4.5));
        assert!(close(lm.log_prob(2, &[1]).unwrap(), 2.5 / 5.5));
        assert!(close(lm.log_prob(1, &[1]).unwrap(), 1.5 / 5.5));
        assert!(close(lm.end_log_prob(&[2]), 2.5 / 4.5));
        assert!(close(lm.log_prob(2, &[2, 2, 2]).unwrap(), 0.5 / 4.5));
    }

    #[test]
    fn deterministic_and_roundtrip() {
        let v = Vocabulary::from_alphabet("abc ").unwrap();
        let corpus = seqs(&["abc ab", "cab", "a b c"], &v);
        let a = train_ngram(&corpus, &v, 3, 0.5).unwrap();
        let b = train_ngram(&corpus, &v, 3, 0.5).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.json");
        a.save(&path).unwrap();
        let back = NGramLM::load(&path).unwrap();
        assert_eq!(back, a);
        assert!(back.check_vocab(&v).is_ok());
        assert!(back.check_vocab(&Vocabulary::from_alphabet("ab").unwrap()).is_err());
    }

    #[test]
    fn larger_k_moves_toward_uniform() {
        let v = Vocabulary::from_alphabet("abcd").unwrap();
        let corpus = seqs(&["abab", "abba", "aaaa", "dcba"], &v);
        let max_dist = |k: f64| {
            let lm = train_ngram(&corpus, &v, 2, k).unwrap();
            let mut worst: f64 = 0.0;
            for ctx in [vec![], vec![1], vec![2], vec![4]] {
                for t in 1..5 {
                    worst = worst.max((lm.log_prob(t, &ctx).unwrap().exp() - 0.2).abs());
                }
                worst = worst.max((lm.end_log_prob(&ctx).exp() - 0.2).abs());
            }
            worst
        };
        let ds: Vec<f64> = [0.1, 0.5, 1.0, 4.0, 50.0].iter().map(|&k| max_dist(k)).collect();
        for w in ds.windows(2) {
            assert!(w[1] < w[0], "{ds:?}");
        }
    }

    proptest! {
        #[test]
        fn conditionals_normalize(
            texts in prop::collection::vec("[abc]{1,8}", 0..6),
            history in prop::collection::vec(1usize..4, 0..5),
            order in 1usize..4,
            k in 0.05f64..3.0,
        ) {
            let v = Vocabulary::from_alphabet("abc").unwrap();
            let corpus: Vec<_> = texts.iter().map(|t| encode_transcript(t, &v).unwrap()).collect();
            let lm = train_ngram(&corpus, &v, order, k).unwrap();
            let total: f64 = (1..4).map(|t| lm.log_prob(t, &history).unwrap().exp()).sum::<f64>()
                + lm.end_log_prob(&history).exp();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
