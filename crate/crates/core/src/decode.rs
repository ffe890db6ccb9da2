//! Alignment-length synchronous beam search and greedy decoding.
//!
//! A beam entry at alignment step `i` with `u` emitted labels sits on lattice
//! node `(t, u)` with `t = i − u`. Blank moves to `(t + 1, u)` and always scores
//! the raw `log P_rnnt(ε)`; a label moves to `(t, u + 1)` and scores according
//! to the configured [`Strategy`]. A blank taken on the last frame finalizes
//! the hypothesis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discount::{advance_roll, d_adapt, kl_divergence, score_disc, DiscountConfig, RollingState};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::FeatureSequence;
use crate::lm::NGramLM;
use crate::logmath::LogDistribution;
use crate::model::{joint_dist, pn_start, pn_step, tn_forward, EncoderOutput, ModelParams, PredictorState};
use crate::vocab::{LabelSequence, BLANK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "adaptlmd")]
    AdaptLmd,
    #[serde(rename = "static_discount")]
    StaticDiscount,
    #[serde(rename = "shallow_fusion")]
    ShallowFusion,
    #[serde(rename = "density_ratio")]
    DensityRatio,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Baseline,
        Strategy::AdaptLmd,
        Strategy::StaticDiscount,
        Strategy::ShallowFusion,
        Strategy::DensityRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::AdaptLmd => "adaptlmd",
            Strategy::StaticDiscount => "static_discount",
            Strategy::ShallowFusion => "shallow_fusion",
            Strategy::DensityRatio => "density_ratio",
        }
    }

    fn needs_ilm(self) -> bool {
        matches!(self, Strategy::AdaptLmd | Strategy::StaticDiscount)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Strategy::ALL.iter().map(|st| st.name()).collect();
                Error::config(format!("unknown decoding strategy `{s}` (valid: {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// Cap on emitted labels per utterance; `None` means twice the frame count.
    #[serde(default)]
    pub max_symbols: Option<usize>,
    pub strategy: Strategy,
    #[serde(default)]
    pub discount: DiscountConfig,
    /// Source-LM weight (density ratio only).
    #[serde(default)]
    pub fusion_mu: f64,
    /// Target-LM weight (shallow fusion and density ratio).
    #[serde(default)]
    pub fusion_nu: f64,
    #[serde(default = "default_nbest")]
    pub nbest: usize,
    /// Record a per-step trace of the best hypothesis.
    #[serde(default)]
    pub trace: bool,
}

fn default_nbest() -> usize {
    1
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 4,
            max_symbols: None,
            strategy: Strategy::Baseline,
            discount: DiscountConfig::default(),
            fusion_mu: 0.0,
            fusion_nu: 0.0,
            nbest: 1,
            trace: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::config("beam_width must be at least 1"));
        }
        if self.nbest == 0 {
            return Err(Error::config("nbest must be at least 1"));
        }
        if !self.fusion_mu.is_finite() || !self.fusion_nu.is_finite() {
            return Err(Error::config("fusion weights must be finite"));
        }
        self.discount.validate()
    }

    pub fn symbol_cap(&self, frames: usize) -> usize {
        self.max_symbols.unwrap_or(2 * frames)
    }
}

/// External LMs for the fusion baselines. Both trained on the same vocabulary
/// as the transducer.
#[derive(Clone, Debug, Default)]
pub struct ExternalLms {
    pub source: Option<NGramLM>,
    pub target: Option<NGramLM>,
}

impl ExternalLms {
    fn target(&self) -> Result<&NGramLM> {
        self.target
            .as_ref()
            .ok_or_else(|| Error::config("this strategy needs a target-domain LM"))
    }

    fn source(&self) -> Result<&NGramLM> {
        self.source
            .as_ref()
            .ok_or_else(|| Error::config("this strategy needs a source-domain LM"))
    }

    /// Fails when `strategy` needs an LM that is absent.
    pub fn check(&self, strategy: Strategy) -> Result<()> {
        match strategy {
            Strategy::ShallowFusion => self.target().map(drop),
            Strategy::DensityRatio => self.target().and(self.source()).map(drop),
            _ => Ok(()),
        }
    }
}

/// One alignment step on the best path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub i: usize,
    pub t: usize,
    pub u: usize,
    /// `0` is blank.
    pub token: usize,
    /// Score added by this step.
    pub contribution: f64,
    pub log_prnnt: f64,
    /// `P_ILM(token)` when the strategy computed it.
    pub p_ilm: Option<f64>,
    pub kl: Option<f64>,
    pub p_roll_before: f64,
    pub p_roll_after: f64,
}

#[derive(Clone, Debug)]
pub struct BeamEntry {
    pub labels: LabelSequence,
    pub score: f64,
    pub pstate: PredictorState,
    pub roll: RollingState,
    pub trace: Vec<TraceStep>,
    /// Set when the last label has not been fed to the predictor yet.
    stale: bool,
}

impl BeamEntry {
    pub fn new(labels: LabelSequence, score: f64, pstate: PredictorState, roll: RollingState) -> Self {
        BeamEntry {
            labels,
            score,
            pstate,
            roll,
            trace: Vec::new(),
            stale: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub labels: LabelSequence,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Sorted by descending score.
    pub nbest: Vec<Hypothesis>,
    pub trace: Option<Vec<TraceStep>>,
}

impl DecodeResult {
    pub fn best(&self) -> &Hypothesis {
        &self.nbest[0]
    }
}

/// Node-level distributions shared by every candidate leaving one entry.
pub struct NodeScores<'a> {
    pub p_rnnt: &'a LogDistribution,
    pub p_ilm: Option<&'a LogDistribution>,
    /// `KL(P_ILM ‖ P_IAM)`, needed by `adaptlmd` only.
    pub kl: Option<f64>,
}

/// Score for extending `entry` with `token` under `cfg.strategy`.
pub fn extension_score(
    entry: &BeamEntry,
    token: usize,
    node: &NodeScores<'_>,
    cfg: &DecodeConfig,
    lms: &ExternalLms,
) -> Result<f64> {
    let log_prnnt = node.p_rnnt.log_prob(token);
    if token == BLANK {
        return Ok(log_prnnt);
    }
    let ilm = || {
        node.p_ilm
            .map(|d| d.log_prob(token))
            .ok_or_else(|| Error::usage("strategy needs the ILM distribution"))
    };
    match cfg.strategy {
        Strategy::Baseline => Ok(log_prnnt),
        Strategy::AdaptLmd => {
            let kl = node.kl.ok_or_else(|| Error::usage("adaptlmd needs the node KL"))?;
            let d = if cfg.discount.static_mode {
                1.0
            } else {
                d_adapt(kl, entry.roll, token, BLANK)
            };
            Ok(score_disc(log_prnnt, ilm()?, d, cfg.discount.lambda))
        }
        Strategy::StaticDiscount => Ok(score_disc(log_prnnt, ilm()?, 1.0, cfg.discount.lambda)),
        Strategy::ShallowFusion => {
            let tgt = lms.target()?.log_prob(token, entry.labels.ids())?;
            Ok(log_prnnt + weighted(cfg.fusion_nu, tgt))
        }
        Strategy::DensityRatio => {
            let tgt = lms.target()?.log_prob(token, entry.labels.ids())?;
            let src = lms.source()?.log_prob(token, entry.labels.ids())?;
            Ok(log_prnnt + weighted(cfg.fusion_nu, tgt) - weighted(cfg.fusion_mu, src))
        }
    }
}

/// `w · x` with an exact zero when `w == 0`, so zero weights reduce to the
/// baseline bit for bit.
fn weighted(w: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * x
    }
}

/// Merges entries with identical labels (keeping the higher score; earlier
/// entry on ties) and returns the best `width` in descending score order,
/// stable with respect to first appearance.
pub fn prune_and_recombine(candidates: Vec<BeamEntry>, width: usize) -> Vec<BeamEntry> {
    let mut merged: Vec<BeamEntry> = Vec::with_capacity(candidates.len());
    let mut seen: std::collections::HashMap<Vec<usize>, usize> = std::collections::HashMap::new();
    for cand in candidates {
        match seen.get(cand.labels.ids()) {
            Some(&slot) => {
                if cand.score > merged[slot].score {
                    merged[slot] = cand;
                }
            }
            None => {
                seen.insert(cand.labels.ids().to_vec(), merged.len());
                merged.push(cand);
            }
        }
    }
    merged.sort_by(|a, b| b.score.total_cmp(&a.score));
    merged.truncate(width);
    merged
}

/// Per-utterance cache of `P_IAM` rows, which depend only on the frame.
struct IamCache<'a> {
    params: &'a ModelParams,
    enc: &'a EncoderOutput,
    rows: Vec<Option<LogDistribution>>,
}

impl<'a> IamCache<'a> {
    fn new(params: &'a ModelParams, enc: &'a EncoderOutput) -> Self {
        IamCache {
            params,
            enc,
            rows: vec![None; enc.frames()],
        }
    }

    fn get(&mut self, t: usize) -> Result<&LogDistribution> {
        if self.rows[t].is_none() {
            self.rows[t] = Some(joint_dist(self.params, Some(self.enc.row(t)), None)?);
        }
        Ok(self.rows[t].as_ref().expect("filled above"))
    }
}

pub fn alsd_decode(
    params: &ModelParams,
    x: &FeatureSequence,
    cfg: &DecodeConfig,
    lms: &ExternalLms,
) -> Result<DecodeResult> {
    cfg.validate()?;
    lms.check(cfg.strategy)?;
    let enc = tn_forward(params, x)?;
    let frames = enc.frames();
    let u_max = cfg.symbol_cap(frames);
    let mut iam = IamCache::new(params, &enc);

    let mut beam = vec![BeamEntry::new(
        LabelSequence::empty(),
        0.0,
        pn_start(params),
        cfg.discount.initial_state(),
    )];
    let mut finals: Vec<BeamEntry> = Vec::new();

    for i in 0..frames + u_max {
        if beam.is_empty() {
            break;
        }
        let mut candidates = Vec::with_capacity(beam.len() * params.dims.vocab);
        for entry in &beam {
            let u = entry.labels.len();
            let t = i - u;
            let h = enc.row(t);
            let p_rnnt = joint_dist(params, Some(h), Some(&entry.pstate.g))?;
            let p_ilm = if cfg.strategy.needs_ilm() {
                Some(joint_dist(params, None, Some(&entry.pstate.g))?)
            } else {
                None
            };
            let kl = match (&p_ilm, cfg.strategy) {
                (Some(ilm), Strategy::AdaptLmd) => Some(kl_divergence(ilm, iam.get(t)?)?),
                _ => None,
            };
            let node = NodeScores {
                p_rnnt: &p_rnnt,
                p_ilm: p_ilm.as_ref(),
                kl,
            };

            let blank_lp = extension_score(entry, BLANK, &node, cfg, lms)?;
            let mut blank = entry.clone();
            blank.score += blank_lp;
            if cfg.trace {
                blank.trace.push(TraceStep {
                    i,
                    t,
                    u,
                    token: BLANK,
                    contribution: blank_lp,
                    log_prnnt: blank_lp,
                    p_ilm: p_ilm.as_ref().map(|d| d.prob(BLANK)),
                    kl,
                    p_roll_before: entry.roll.p_roll,
                    p_roll_after: entry.roll.p_roll,
                });
            }
            if t + 1 == frames {
                finals.push(blank);
            } else {
                candidates.push(blank);
            }

            if u >= u_max {
                continue;
            }
            for token in 1..params.dims.vocab {
                let contribution = extension_score(entry, token, &node, cfg, lms)?;
                let roll = match (&p_ilm, cfg.strategy) {
                    (Some(ilm), Strategy::AdaptLmd) => advance_roll(&cfg.discount, entry.roll, ilm.prob(token)),
                    _ => entry.roll,
                };
                let mut labels = entry.labels.clone();
                labels.push(token);
                let mut trace = Vec::new();
                if cfg.trace {
                    trace = entry.trace.clone();
                    trace.push(TraceStep {
                        i,
                        t,
                        u,
                        token,
                        contribution,
                        log_prnnt: p_rnnt.log_prob(token),
                        p_ilm: p_ilm.as_ref().map(|d| d.prob(token)),
                        kl,
                        p_roll_before: entry.roll.p_roll,
                        p_roll_after: roll.p_roll,
                    });
                }
                // The predictor is advanced after pruning, so only survivors
                // pay for a PN step.
                candidates.push(BeamEntry {
                    labels,
                    score: entry.score + contribution,
                    pstate: entry.pstate.clone(),
                    roll,
                    trace,
                    stale: true,
                });
            }
        }
        beam = prune_and_recombine(candidates, cfg.beam_width);
        for entry in beam.iter_mut().filter(|e| e.stale) {
            let label = *entry.labels.ids().last().expect("stale entries have emitted");
            entry.pstate = pn_step(params, &entry.pstate, label)?;
            entry.stale = false;
        }
    }

    if finals.is_empty() {
        return Err(Error::usage("decoding produced no finished hypothesis (empty input?)"));
    }
    let mut finals = prune_and_recombine(finals, usize::MAX);
    finals.truncate(cfg.nbest);
    let trace = cfg.trace.then(|| finals[0].trace.clone());
    Ok(DecodeResult {
        nbest: finals
            .into_iter()
            .map(|e| Hypothesis {
                labels: e.labels,
                score: e.score,
            })
            .collect(),
        trace,
    })
}

/// Frame-by-frame argmax decoding. At most `max_symbols` labels are emitted on
/// any one frame; after that the frame is left as if blank had won.
pub fn greedy_decode(params: &ModelParams, x: &FeatureSequence, max_symbols: usize) -> Result<DecodeResult> {
    let enc = tn_forward(params, x)?;
    let mut state = pn_start(params);
    let mut labels = LabelSequence::empty();
    let mut score = 0.0;
    for t in 0..enc.frames() {
        let mut emitted = 0;
        loop {
            let dist = joint_dist(params, Some(enc.row(t)), Some(&state.g))?;
            let k = dist.argmax();
            if k == BLANK || emitted >= max_symbols {
                score += dist.log_prob(BLANK);
                break;
            }
            score += dist.log_prob(k);
            labels.push(k);
            state = pn_step(params, &state, k)?;
            emitted += 1;
        }
    }
    Ok(DecodeResult {
        nbest: vec![Hypothesis { labels, score }],
        trace: None,
    })
}

/// Decodes every utterance independently, results in input order.
pub fn decode_corpus(
    params: &ModelParams,
    inputs: &[FeatureSequence],
    cfg: &DecodeConfig,
    lms: &ExternalLms,
    exec: Exec,
) -> Vec<Result<DecodeResult>> {
    exec.map(inputs, |_, x| alsd_decode(params, x, cfg, lms))
}
