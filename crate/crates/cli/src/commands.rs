use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rnnt_core::data::{gen_corpus_with_stats, load_corpus, sample_transcripts, save_corpus, split_corpus, Utterance};
use rnnt_core::decode::{decode_corpus, greedy_decode, DecodeResult, ExternalLms, Strategy};
use rnnt_core::eval::{evaluate, rare_table, EvalPair, G2pTable};
use rnnt_core::lm::{train_ngram, NGramLM};
use rnnt_core::loss::gradcheck::{gradient_check, GradCheckReport, GRADCHECK_EPSILON};
use rnnt_core::loss::Example;
use rnnt_core::model::checkpoint::Checkpoint;
use rnnt_core::model::{ModelDims, ModelParams};
use rnnt_core::seed::derive_seed;
use rnnt_core::train::{examples_from_corpus, train, LOG_HEADER};
use rnnt_core::{decode_labels, encode_transcript, Exec, FeatureSequence, LabelSequence, Vocabulary};

use crate::config::RunConfig;
use crate::{Cli, Command, UsageError, VerificationFailed};

/// Largest model `gradcheck` will run on.
pub const GRADCHECK_MAX_PARAMS: usize = 5000;

pub fn dispatch(cli: &Cli, overrides: &BTreeMap<String, String>) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), overrides, cli.seed)?;
    if let Command::Decode { strategy: Some(s), .. } = &cli.command {
        cfg.decode.strategy = s.parse::<Strategy>().map_err(|e| UsageError(e.to_string()))?;
        cfg.validate()?;
    }
    if let Command::Eval { threshold: Some(t), .. } = &cli.command {
        cfg.eval.rare_threshold = *t;
        cfg.validate()?;
    }
    if let Some(0) = cli.threads {
        bail!(UsageError("--threads must be at least 1".into()));
    }
    with_threads(cli.threads, || match &cli.command {
        Command::Gen { out } => cmd_gen(&cfg, out),
        Command::Train { corpus, out, resume } => cmd_train(&cfg, corpus, out, *resume, train_exec(cli.threads)),
        Command::Decode {
            checkpoint,
            corpus,
            out,
            lm_source,
            lm_target,
            greedy,
            ..
        } => cmd_decode(
            &cfg,
            &DecodeArgs {
                checkpoint,
                corpus,
                out,
                lm_source: lm_source.as_deref(),
                lm_target: lm_target.as_deref(),
                greedy: *greedy,
                trace: cli.trace,
            },
            pool_exec(cli.threads),
        ),
        Command::Eval {
            refs,
            hyps,
            train,
            out,
            per_utterance,
            ..
        } => cmd_eval(&cfg, refs, hyps, train, out, *per_utterance || cfg.eval.per_utterance, pool_exec(cli.threads)),
        Command::Gradcheck { corrupt } => cmd_gradcheck(&cfg, corrupt.as_deref()),
    })
}

/// Training stays serial unless more than one thread is asked for.
fn train_exec(threads: Option<usize>) -> Exec {
    match threads {
        Some(n) if n > 1 => Exec::Parallel,
        _ => Exec::Serial,
    }
}

fn pool_exec(threads: Option<usize>) -> Exec {
    match threads {
        Some(1) => Exec::Serial,
        _ => Exec::default(),
    }
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) if n > 1 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R>(_threads: Option<usize>, f: impl FnOnce() -> R) -> R {
    f()
}

/// `dir/name` plus `suffix` appended to the file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn echo_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    fs::write(path, cfg.to_toml()).with_context(|| format!("writing {}", path.display()))
}

pub const GEN_FILES: [&str; 3] = ["train.jsonl", "dev.jsonl", "test.jsonl"];

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    if !out.is_dir() {
        bail!(UsageError(format!("output directory {} does not exist", out.display())));
    }
    let vocab = cfg.vocabulary()?;
    let spec = &cfg.data.corpus;
    let (corpus, stats) = gen_corpus_with_stats(spec)?;
    let split = split_corpus(&corpus, cfg.data.split, cfg.seed, &spec.domains, cfg.data.held_out_domain.as_deref())?;
    for (name, part) in GEN_FILES.iter().zip([&split.train, &split.dev, &split.test]) {
        save_corpus(part, out.join(name))?;
    }
    vocab.save(out.join("vocab.txt"))?;

    let labels = |texts: &mut dyn Iterator<Item = &str>| -> Result<Vec<LabelSequence>> {
        Ok(texts.map(|t| encode_transcript(t, &vocab)).collect::<rnnt_core::Result<_>>()?)
    };
    let source = labels(&mut split.train.iter().map(|u| u.transcript.as_str()))?;
    train_ngram(&source, &vocab, cfg.data.lm_order, cfg.data.lm_add_k)?.save(out.join("lm_source.json"))?;
    let target_text = sample_transcripts(
        spec,
        cfg.data.held_out_domain.as_deref(),
        cfg.data.lm_target_utterances,
        derive_seed(cfg.seed, "lm-target"),
    )?;
    let target = labels(&mut target_text.iter().map(String::as_str))?;
    train_ngram(&target, &vocab, cfg.data.lm_order, cfg.data.lm_add_k)?.save(out.join("lm_target.json"))?;
    echo_config(cfg, &out.join("effective_config.toml"))?;

    println!(
        "wrote {} train / {} dev / {} test utterances to {} ({} words, {} rare injections)",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        out.display(),
        stats.words,
        stats.rare_words
    );
    Ok(())
}

fn check_dims(cfg: &RunConfig, found: ModelDims, what: &Path) -> Result<()> {
    if found != cfg.model {
        bail!(UsageError(format!(
            "{} has model dims {found:?} but the config says {:?}",
            what.display(),
            cfg.model
        )));
    }
    Ok(())
}

fn load_checkpoint(cfg: &RunConfig, vocab: &Vocabulary, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    check_dims(cfg, ckpt.dims, path)?;
    if let Some(h) = &ckpt.vocab_hash {
        if *h != vocab.content_hash() {
            bail!(UsageError(format!("{} was trained with a different vocabulary", path.display())));
        }
    }
    Ok(ckpt)
}

fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let tmp = sibling(path, ".tmp");
    ckpt.save(&tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_train(cfg: &RunConfig, corpus: &Path, out: &Path, resume: bool, exec: Exec) -> Result<()> {
    let vocab = cfg.vocabulary()?;
    let utts = load_corpus(corpus)?;
    let examples = examples_from_corpus(&utts, &vocab)?;
    let (mut params, start) = if resume {
        let ckpt = load_checkpoint(cfg, &vocab, out)?;
        if ckpt.seed != cfg.seed {
            bail!(UsageError(format!(
                "{} was trained with seed {} but the config says {}",
                out.display(),
                ckpt.seed,
                cfg.seed
            )));
        }
        (ckpt.to_params()?, ckpt.epochs_completed)
    } else {
        (ModelParams::init(cfg.model, cfg.seed)?, 0)
    };
    echo_config(cfg, &sibling(out, ".config.toml"))?;

    let log_path = sibling(out, ".log.tsv");
    let mut log = if resume && log_path.exists() {
        OpenOptions::new().append(true).open(&log_path)?
    } else {
        let mut f = File::create(&log_path)?;
        writeln!(f, "{LOG_HEADER}")?;
        f
    };
    let hash = vocab.content_hash();
    let stats = train(&mut params, &examples, &cfg.loss, &cfg.train, start, exec, |p, s| {
        let mut ckpt = Checkpoint::from_params(p, cfg.seed, s.epoch);
        ckpt.vocab_hash = Some(hash.clone());
        save_checkpoint(&ckpt, out).map_err(|e| rnnt_core::Error::Io(std::io::Error::other(format!("{e:#}"))))?;
        writeln!(log, "{}", s.log_line())?;
        log.flush()?;
        eprintln!("{}", s.log_line());
        Ok(())
    })
    .with_context(|| format!("training on {}", corpus.display()))?;
    if stats.is_empty() {
        eprintln!("nothing to do: {} already has {start} epochs", out.display());
    }
    Ok(())
}

pub struct DecodeArgs<'a> {
    pub checkpoint: &'a Path,
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub lm_source: Option<&'a Path>,
    pub lm_target: Option<&'a Path>,
    pub greedy: bool,
    pub trace: bool,
}

fn load_lm(path: Option<&Path>, vocab: &Vocabulary) -> Result<Option<NGramLM>> {
    path.map(|p| -> Result<NGramLM> {
        let lm = NGramLM::load(p).with_context(|| format!("loading LM {}", p.display()))?;
        lm.check_vocab(vocab).with_context(|| p.display().to_string())?;
        Ok(lm)
    })
    .transpose()
}

pub fn cmd_decode(cfg: &RunConfig, args: &DecodeArgs<'_>, exec: Exec) -> Result<()> {
    let vocab = cfg.vocabulary()?;
    let params = load_checkpoint(cfg, &vocab, args.checkpoint)?.to_params()?;
    let utts = load_corpus(args.corpus)?;
    let dcfg = cfg.decode.resolve(args.trace)?;
    let lms = ExternalLms {
        source: load_lm(args.lm_source, &vocab)?,
        target: load_lm(args.lm_target, &vocab)?,
    };
    if !args.greedy {
        lms.check(dcfg.strategy).map_err(|e| UsageError(e.to_string()))?;
    }
    let inputs: Vec<FeatureSequence> = utts.iter().map(|u| u.features.clone()).collect();
    let results: Vec<rnnt_core::Result<DecodeResult>> = if args.greedy {
        exec.map(&inputs, |_, x| greedy_decode(&params, x, dcfg.symbol_cap(x.frames())))
    } else {
        decode_corpus(&params, &inputs, &dcfg, &lms, exec)
    };
    echo_config(cfg, &sibling(args.out, ".config.toml"))?;

    let mut hyps = BufWriter::new(File::create(args.out).with_context(|| format!("creating {}", args.out.display()))?);
    let mut trace = if args.trace {
        Some(BufWriter::new(File::create(sibling(args.out, ".trace.jsonl"))?))
    } else {
        None
    };
    for (u, r) in utts.iter().zip(results) {
        let r = r.with_context(|| format!("decoding {}", u.id))?;
        let best = r.best();
        let text = decode_labels(&best.labels, &vocab)?;
        writeln!(hyps, "{}\t{}\t{:.6}", u.id, text, best.score)?;
        if let (Some(w), Some(steps)) = (trace.as_mut(), r.trace.as_ref()) {
            for step in steps {
                let mut rec = serde_json::to_value(step)?;
                rec.as_object_mut()
                    .expect("trace step serializes to an object")
                    .insert("id".into(), u.id.clone().into());
                writeln!(w, "{}", serde_json::to_string(&rec)?)?;
            }
        }
    }
    hyps.flush()?;
    if let Some(mut w) = trace {
        w.flush()?;
    }
    Ok(())
}

/// Reads `id<TAB>text<TAB>score` lines as written by `decode`.
pub fn load_hypotheses(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(id), Some(hyp)) if !id.is_empty() => out.push((id.to_owned(), hyp.to_owned())),
            _ => {
                return Err(rnnt_core::Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: "expected `id<TAB>text<TAB>score`".into(),
                }
                .into())
            }
        }
    }
    Ok(out)
}

/// Pairs references with hypotheses by id, in reference order.
pub fn pair_by_id(refs: &[Utterance], hyps: &[(String, String)]) -> Result<Vec<EvalPair>> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(hyps.len());
    for (id, h) in hyps {
        if by_id.insert(id, h).is_some() {
            bail!(UsageError(format!("duplicate hypothesis id `{id}`")));
        }
    }
    let mut pairs = Vec::with_capacity(refs.len());
    for u in refs {
        let h = by_id
            .remove(u.id.as_str())
            .ok_or_else(|| UsageError(format!("id mismatch: no hypothesis for reference id `{}`", u.id)))?;
        pairs.push(EvalPair {
            id: u.id.clone(),
            reference: u.transcript.clone(),
            hypothesis: h.to_owned(),
        });
    }
    if let Some((id, _)) = hyps.iter().find(|(id, _)| by_id.contains_key(id.as_str())) {
        bail!(UsageError(format!("id mismatch: hypothesis id `{id}` has no reference")));
    }
    Ok(pairs)
}

pub fn cmd_eval(
    cfg: &RunConfig,
    refs: &Path,
    hyps: &Path,
    train_corpus: &Path,
    out: &Path,
    per_utterance: bool,
    exec: Exec,
) -> Result<()> {
    let references = load_corpus(refs)?;
    let hypotheses = load_hypotheses(hyps)?;
    let pairs = pair_by_id(&references, &hypotheses)?;
    let train_text: Vec<String> = load_corpus(train_corpus)?.into_iter().map(|u| u.transcript).collect();
    let table = rare_table(&train_text, cfg.eval.rare_threshold)?;
    let g2p = cfg.eval.g2p.as_ref().map(G2pTable::load).transpose()?;
    let report = evaluate(&pairs, Some(&table), g2p.as_ref(), exec)?;
    echo_config(cfg, &sibling(out, ".config.toml"))?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    report.write_tsv(&mut w, per_utterance)?;
    w.flush()?;
    println!("WER {:.4}  CER {:.4}", report.wer(), report.cer());
    Ok(())
}

/// The config's model when it is small enough, otherwise the same vocabulary
/// and input width with every hidden size cut to 8.
pub fn gradcheck_dims(model: ModelDims) -> Result<ModelDims> {
    if model.param_count() <= GRADCHECK_MAX_PARAMS {
        return Ok(model);
    }
    let tiny = ModelDims {
        d_emb: 8,
        d_enc: 8,
        d_pred: 8,
        d_joint: 8,
        ..model
    };
    if tiny.param_count() > GRADCHECK_MAX_PARAMS {
        bail!(UsageError(format!(
            "gradcheck needs at most {GRADCHECK_MAX_PARAMS} parameters; even hidden size 8 gives {}",
            tiny.param_count()
        )));
    }
    Ok(tiny)
}

/// Two one-word utterances from the configured generator.
fn gradcheck_batch(cfg: &RunConfig, vocab: &Vocabulary) -> Result<Vec<Example>> {
    let mut spec = cfg.data.corpus.clone();
    spec.utterances = 2;
    spec.min_words = 1;
    spec.max_words = 1;
    spec.seed = derive_seed(cfg.seed, "gradcheck");
    let (corpus, _) = gen_corpus_with_stats(&spec)?;
    Ok(examples_from_corpus(&corpus, vocab)?)
}

/// Runs the finite-difference check `gradcheck` reports on.
pub fn gradcheck_report(cfg: &RunConfig, corrupt: Option<&str>) -> Result<(usize, GradCheckReport)> {
    let vocab = cfg.vocabulary()?;
    let dims = gradcheck_dims(cfg.model)?;
    let params = ModelParams::init(dims, cfg.seed)?;
    let batch = gradcheck_batch(cfg, &vocab)?;
    let corrupt = match corrupt {
        None => None,
        Some(name) => {
            let idx = params
                .tensors()
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| UsageError(format!("no parameter tensor named `{name}`")))?;
            Some((idx, 0))
        }
    };
    let report = gradient_check(&params, &batch, &cfg.loss, GRADCHECK_EPSILON, corrupt)?;
    Ok((params.param_count(), report))
}

pub fn cmd_gradcheck(cfg: &RunConfig, corrupt: Option<&str>) -> Result<()> {
    let (n_params, report) = gradcheck_report(cfg, corrupt)?;
    println!("# {n_params} parameters, tolerance {:e}", report.tolerance);
    println!("tensor\tlen\tmax_rel_err\tmax_abs_err");
    for t in &report.tensors {
        println!("{}\t{}\t{:.3e}\t{:.3e}", t.name, t.len, t.max_rel_err, t.max_abs_err);
    }
    if report.passed() {
        println!("PASS max relative error {:.3e}", report.max_rel_err());
        Ok(())
    } else {
        println!("FAIL max relative error {:.3e}", report.max_rel_err());
        Err(VerificationFailed(format!(
            "gradient check failed: max relative error {:.3e} >= {:e}",
            report.max_rel_err(),
            report.tolerance
        ))
        .into())
    }
}
