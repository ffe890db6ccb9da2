//! Command-line front end for the transducer toolkit.
//!
//! `rnnt [--config FILE] [--seed N] [--trace] [--threads N] <command> ...`
//! with any number of `--section.key=value` config overrides anywhere on the
//! command line. Exit codes: 0 success, 1 usage or input error, 2 numeric or
//! verification failure.

pub mod commands;
pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

/// Bad invocation or configuration (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A check the user asked for did not pass (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct VerificationFailed(pub String);

#[derive(Debug, Parser)]
#[command(name = "rnnt", version, about = "Desk-scale RNN-T training and adaptive ILM-discounted decoding")]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write per-step decoding traces next to the hypothesis file.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Worker threads for data-parallel work; 1 forces serial execution.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: train/dev/test JSONL, vocabulary and
    /// source/target character LMs.
    Gen {
        /// Existing directory to write into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with the combined transducer + ILM + IAM objective.
    ///
    /// Writes the checkpoint after every epoch and a tab-separated log
    /// (epoch, loss, nll_full, nll_ilm, nll_iam, wall_ms) to <OUT>.log.tsv.
    Train {
        /// Training corpus (JSONL).
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint at --out.
        #[arg(long)]
        resume: bool,
    },
    /// Beam-search decode a corpus.
    ///
    /// Output: one line per utterance, `id<TAB>text<TAB>score`. With --trace,
    /// <OUT>.trace.jsonl holds one record per alignment step of each best path.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// baseline, adaptlmd, static_discount, shallow_fusion or density_ratio;
        /// overrides decode.strategy.
        #[arg(long)]
        strategy: Option<String>,
        /// Source-domain LM (density_ratio).
        #[arg(long)]
        lm_source: Option<PathBuf>,
        /// Target-domain LM (shallow_fusion, density_ratio).
        #[arg(long)]
        lm_target: Option<PathBuf>,
        /// Greedy decoding instead of beam search (strategy is ignored).
        #[arg(long)]
        greedy: bool,
    },
    /// Score hypotheses against references.
    ///
    /// Report: tab-separated `key<TAB>value` lines in the order utterances,
    /// ref_words, word_sub, word_del, word_ins, wer, ref_chars, char_sub,
    /// char_del, char_ins, cer, rare_words, rare_cer, rare_sub_rate, per,
    /// rare_per ("NA" when undefined). With per-utterance output a blank line
    /// follows, then a header and one row per utterance: id, ref_words,
    /// word_errors, wer, ref_chars, char_errors, cer, reference, hypothesis.
    Eval {
        /// Reference corpus (JSONL).
        #[arg(long)]
        refs: PathBuf,
        /// Hypothesis file written by `decode`.
        #[arg(long)]
        hyps: PathBuf,
        /// Training corpus (JSONL) whose word counts define rare words.
        #[arg(long)]
        train: PathBuf,
        /// Rare-word threshold (count strictly below); overrides eval.rare_threshold.
        #[arg(long)]
        threshold: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Append the per-utterance section.
        #[arg(long)]
        per_utterance: bool,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        /// Negative control: perturb one element of the named tensor's
        /// analytic gradient.
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

/// Splits `--section.key=value` overrides out of the raw arguments; the rest
/// goes to clap.
pub fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, BTreeMap<String, String>), UsageError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = BTreeMap::new();
    for a in args {
        if let Some(s) = a.to_str() {
            if let Some(body) = s.strip_prefix("--") {
                let key = body.split('=').next().unwrap_or("");
                if key.contains('.') {
                    let (key, value) = body
                        .split_once('=')
                        .ok_or_else(|| UsageError(format!("override `{s}` needs the form --section.key=value")))?;
                    overrides.insert(key.to_owned(), value.to_owned());
                    continue;
                }
            }
        }
        rest.push(a);
    }
    Ok((rest, overrides))
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<VerificationFailed>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<rnnt_core::Error>() {
            return if e.is_numeric() { 2 } else { 1 };
        }
    }
    1
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Output goes to stdout/stderr.
pub fn run(args: Vec<OsString>) -> i32 {
    let (rest, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
