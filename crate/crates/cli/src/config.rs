//! Run configuration: one TOML file with `[model]`, `[loss]`, `[train]`,
//! `[decode]`, `[data]` and `[eval]` sections plus a top-level `seed`.
//! Every key has a default; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rnnt_core::data::CorpusSpec;
use rnnt_core::decode::{DecodeConfig, Strategy};
use rnnt_core::discount::DiscountConfig;
use rnnt_core::eval::DEFAULT_RARE_THRESHOLD;
use rnnt_core::loss::LossConfig;
use rnnt_core::model::ModelDims;
use rnnt_core::train::TrainConfig;
use rnnt_core::Vocabulary;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelDims,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub decode: DecodeSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

/// Decoder settings. `lambda` and `rho` have no defaults: they are tuned per
/// task and must be given for the discounting strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub strategy: Strategy,
    pub beam_width: usize,
    /// Label cap per utterance; twice the frame count when absent.
    pub max_symbols: Option<usize>,
    pub nbest: usize,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub p_roll_init: f64,
    pub static_mode: bool,
    pub ema: bool,
    pub fusion_mu: f64,
    pub fusion_nu: f64,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = DecodeConfig::default();
        DecodeSection {
            strategy: d.strategy,
            beam_width: d.beam_width,
            max_symbols: d.max_symbols,
            nbest: d.nbest,
            lambda: None,
            rho: None,
            p_roll_init: d.discount.p_roll_init,
            static_mode: false,
            ema: false,
            fusion_mu: 0.0,
            fusion_nu: 0.0,
        }
    }
}

impl DecodeSection {
    pub fn resolve(&self, trace: bool) -> Result<DecodeConfig> {
        let needs = |name: &str, v: Option<f64>| -> Result<f64> {
            match (self.strategy, v) {
                (_, Some(v)) => Ok(v),
                (Strategy::AdaptLmd, None) => Err(UsageError(format!("strategy adaptlmd needs decode.{name}")).into()),
                (Strategy::StaticDiscount, None) if name == "lambda" => {
                    Err(UsageError("strategy static_discount needs decode.lambda".into()).into())
                }
                _ => Ok(0.0),
            }
        };
        let cfg = DecodeConfig {
            beam_width: self.beam_width,
            max_symbols: self.max_symbols,
            strategy: self.strategy,
            discount: DiscountConfig {
                lambda: needs("lambda", self.lambda)?,
                rho: needs("rho", self.rho)?,
                p_roll_init: self.p_roll_init,
                static_mode: self.static_mode,
                ema: self.ema,
            },
            fusion_mu: self.fusion_mu,
            fusion_nu: self.fusion_nu,
            nbest: self.nbest,
            trace,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Train/dev/test fractions of the utterances outside the held-out domain.
    pub split: [f64; 3],
    /// Domain whose utterances all go to test.
    pub held_out_domain: Option<String>,
    /// Order and add-k constant of the external character LMs.
    pub lm_order: usize,
    pub lm_add_k: f64,
    /// Size of the text-only target-domain sample for the target LM.
    pub lm_target_utterances: usize,
    pub corpus: CorpusSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            split: [0.8, 0.1, 0.1],
            held_out_domain: None,
            lm_order: 3,
            lm_add_k: 0.5,
            lm_target_utterances: 1000,
            corpus: CorpusSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Words seen fewer than this many times in training are rare.
    pub rare_threshold: u64,
    /// Optional `word<TAB>phonemes` table enabling PER.
    pub g2p: Option<String>,
    pub per_utterance: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            rare_threshold: DEFAULT_RARE_THRESHOLD,
            g2p: None,
            per_utterance: false,
        }
    }
}

impl RunConfig {
    /// Parses TOML, applies `overrides` (`section.key` → raw value) and the
    /// optional seed, then validates.
    pub fn from_toml(text: &str, overrides: &BTreeMap<String, String>, seed: Option<u64>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| UsageError(format!("config: {e}")))?;
        for (key, raw) in overrides {
            set_path(&mut table, key, parse_value(raw))?;
        }
        if let Some(s) = seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| UsageError(format!("config: {}", e.message())))?;
        cfg.loss.seed = cfg.seed;
        cfg.data.corpus.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &BTreeMap<String, String>, seed: Option<u64>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: rnnt_core::Result<()>| r.map_err(|e| UsageError(e.to_string()));
        wrap(self.model.validate())?;
        wrap(self.loss.validate())?;
        wrap(self.train.validate())?;
        wrap(self.data.corpus.validate())?;
        let vocab = self.vocabulary()?;
        if vocab.size() != self.model.vocab {
            bail!(UsageError(format!(
                "model.vocab is {} but the data alphabet gives {} tokens (blank and space included)",
                self.model.vocab,
                vocab.size()
            )));
        }
        if self.data.corpus.feature_dim != self.model.d_in {
            bail!(UsageError(format!(
                "model.d_in is {} but data.corpus.feature_dim is {}",
                self.model.d_in, self.data.corpus.feature_dim
            )));
        }
        let split = &self.data.split;
        if split.iter().any(|f| !(0.0..=1.0).contains(f)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bail!(UsageError("data.split fractions must be in [0, 1] and sum to 1".into()));
        }
        if let Some(d) = &self.data.held_out_domain {
            if !self.data.corpus.domains.contains_key(d) {
                bail!(UsageError(format!("data.held_out_domain `{d}` is not a corpus domain")));
            }
        }
        if self.data.lm_order == 0 || !(self.data.lm_add_k > 0.0) {
            bail!(UsageError("data.lm_order must be >= 1 and data.lm_add_k > 0".into()));
        }
        if self.eval.rare_threshold == 0 {
            bail!(UsageError("eval.rare_threshold must be at least 1".into()));
        }
        // Discount parameters are only checked when a strategy needs them.
        self.decode.resolve(false)?;
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        self.data.corpus.vocabulary().map_err(|e| UsageError(e.to_string()).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Values that parse as TOML (numbers, booleans, arrays, quoted strings) are
/// taken as such; anything else is a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| UsageError(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}
