//! Utterance corpora: a synthetic generator, JSONL persistence and
//! train/dev/test splits.
//!
//! Generated acoustics are a fixed random embedding per character, repeated
//! `frames_per_char` times with Gaussian noise on top. Word sequences are Zipf
//! draws over the common words with occasional rare-word insertions, so the
//! prediction network learns a strong prior that rare spellings fight against.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::seed::{derive_seed, rng, Rng};
use crate::vocab::{normalize_text, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureSequence,
    pub transcript: String,
}

pub type Corpus = Vec<Utterance>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    /// Characters words may use. Space is added to the vocabulary as the word
    /// separator.
    pub alphabet: String,
    pub common_words: Vec<String>,
    pub rare_words: Vec<String>,
    /// Domain tag → words (drawn from the common and rare lists) that only
    /// occur in utterances of that domain.
    pub domains: BTreeMap<String, Vec<String>>,
    pub zipf_s: f64,
    /// Per-word probability of drawing a rare word instead of a common one.
    pub rare_prob: f64,
    pub utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub frames_per_char: usize,
    pub noise_sigma: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

const COMMON_WORDS: &[&str] = &[
    "the", "to", "and", "a", "of", "in", "is", "it", "you", "that", "he", "was", "for", "on", "are", "with", "as",
    "his", "they", "be", "at", "one", "have", "this", "from", "or", "had", "by", "hot", "word", "but", "what",
    "some", "we", "can", "out", "other", "were", "all", "there", "when", "up", "use", "your", "how", "said", "an",
    "each", "she", "which", "do", "their", "time", "if", "will", "way", "about", "many", "then", "them", "game",
    "team", "score", "ball", "cook", "bake", "salt", "soup", "train", "hotel", "map", "road",
];

const RARE_WORDS: &[&str] = &[
    "vicky", "zubin", "quixote", "kazoo", "jinx", "fjord", "yacht", "wombat", "klutz", "zephyr", "pixie", "quokka",
    "juxta", "vortex", "gazebo", "sphinx", "banjo", "cobalt", "dynamo", "quartz", "waltz", "jockey", "oxbow",
    "hyphen",
];

impl Default for CorpusSpec {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut domains = BTreeMap::new();
        domains.insert("sports".to_owned(), words(&["game", "team", "score", "ball", "jockey", "banjo"]));
        domains.insert("cooking".to_owned(), words(&["cook", "bake", "salt", "soup", "quokka", "cobalt"]));
        domains.insert("travel".to_owned(), words(&["train", "hotel", "map", "road", "fjord", "yacht", "oxbow"]));
        CorpusSpec {
            alphabet: "abcdefghijklmnopqrstuvwxyz".to_owned(),
            common_words: words(COMMON_WORDS),
            rare_words: words(RARE_WORDS),
            domains,
            zipf_s: 1.0,
            rare_prob: 0.05,
            utterances: 2000,
            min_words: 1,
            max_words: 4,
            frames_per_char: 3,
            noise_sigma: 0.3,
            feature_dim: 8,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_alphabet(&format!("{} ", self.alphabet))
    }

    pub fn validate(&self) -> Result<()> {
        let vocab = self.vocabulary()?;
        if self.alphabet.contains(char::is_whitespace) {
            return Err(Error::config("alphabet must not contain whitespace"));
        }
        if self.common_words.is_empty() {
            return Err(Error::config("common_words must not be empty"));
        }
        if self.rare_prob > 0.0 && self.rare_words.is_empty() {
            return Err(Error::config("rare_prob > 0 needs at least one rare word"));
        }
        if !(0.0..=1.0).contains(&self.rare_prob) {
            return Err(Error::config("rare_prob must lie in [0, 1]"));
        }
        if !(self.zipf_s >= 0.0 && self.zipf_s.is_finite()) {
            return Err(Error::config("zipf_s must be finite and non-negative"));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::config("need 1 <= min_words <= max_words"));
        }
        if self.frames_per_char == 0 || self.feature_dim == 0 {
            return Err(Error::config("frames_per_char and feature_dim must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be finite and non-negative"));
        }
        let common: HashSet<&str> = self.common_words.iter().map(String::as_str).collect();
        let rare: HashSet<&str> = self.rare_words.iter().map(String::as_str).collect();
        if common.len() != self.common_words.len() || rare.len() != self.rare_words.len() {
            return Err(Error::config("word lists contain duplicates"));
        }
        if let Some(w) = common.intersection(&rare).next() {
            return Err(Error::config(format!("`{w}` is both common and rare")));
        }
        for w in common.iter().chain(&rare) {
            if w.is_empty() {
                return Err(Error::config("empty word in word list"));
            }
            if let Some(c) = w.chars().find(|&c| c == ' ' || vocab.index_of(c).is_none()) {
                return Err(Error::config(format!("word `{w}` uses {c:?}, which is not in the alphabet")));
            }
        }
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (tag, words) in &self.domains {
            for w in words {
                if !common.contains(w.as_str()) && !rare.contains(w.as_str()) {
                    return Err(Error::config(format!("domain `{tag}` word `{w}` is in neither word list")));
                }
                if let Some(prev) = owner.insert(w, tag) {
                    return Err(Error::config(format!("`{w}` belongs to domains `{prev}` and `{tag}`")));
                }
            }
        }
        // Every domain (and the untagged pool) must leave a common word to draw.
        for tag in self.domain_tags() {
            if self.eligible(&self.common_words, tag.as_deref()).is_empty() {
                return Err(Error::config("a domain has no common words to draw from"));
            }
        }
        Ok(())
    }

    /// `None` stands for utterances outside every domain.
    fn domain_tags(&self) -> Vec<Option<String>> {
        let mut tags: Vec<Option<String>> = self.domains.keys().cloned().map(Some).collect();
        tags.push(None);
        tags
    }

    /// Words of `list` usable in an utterance of `domain`: untagged words plus
    /// that domain's own.
    fn eligible<'a>(&self, list: &'a [String], domain: Option<&str>) -> Vec<&'a str> {
        let foreign: HashSet<&str> = self
            .domains
            .iter()
            .filter(|(tag, _)| Some(tag.as_str()) != domain)
            .flat_map(|(_, ws)| ws.iter().map(String::as_str))
            .collect();
        list.iter().map(String::as_str).filter(|w| !foreign.contains(w)).collect()
    }
}

struct DomainSampler<'a> {
    common: Vec<&'a str>,
    zipf: WeightedIndex<f64>,
    rare: Vec<&'a str>,
}

struct TranscriptSampler<'a> {
    spec: &'a CorpusSpec,
    domains: Vec<(Option<String>, DomainSampler<'a>)>,
}

impl<'a> TranscriptSampler<'a> {
    fn new(spec: &'a CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let mut domains = Vec::new();
        for tag in spec.domain_tags() {
            let common = spec.eligible(&spec.common_words, tag.as_deref());
            let weights: Vec<f64> = (1..=common.len()).map(|r| (r as f64).powf(-spec.zipf_s)).collect();
            let zipf = WeightedIndex::new(&weights).map_err(|e| Error::config(format!("zipf weights: {e}")))?;
            let rare = spec.eligible(&spec.rare_words, tag.as_deref());
            domains.push((tag, DomainSampler { common, zipf, rare }));
        }
        Ok(TranscriptSampler { spec, domains })
    }

    fn sample(&self, domain: usize, rng: &mut Rng) -> (String, usize, usize) {
        let d = &self.domains[domain].1;
        let n = rng.random_range(self.spec.min_words..=self.spec.max_words);
        let mut words = Vec::with_capacity(n);
        let mut rare = 0;
        for _ in 0..n {
            if !d.rare.is_empty() && rng.random::<f64>() < self.spec.rare_prob {
                words.push(d.rare[rng.random_range(0..d.rare.len())]);
                rare += 1;
            } else {
                words.push(d.common[d.zipf.sample(rng)]);
            }
        }
        (words.join(" "), n, rare)
    }

    fn domain_index(&self, tag: Option<&str>) -> Result<usize> {
        self.domains
            .iter()
            .position(|(t, _)| t.as_deref() == tag)
            .ok_or_else(|| Error::config(format!("unknown domain `{}`", tag.unwrap_or(""))))
    }
}

/// Fixed per-character embeddings, row `id` for vocabulary index `id`
/// (row 0, blank, is unused).
pub fn char_embeddings(spec: &CorpusSpec, vocab: &Vocabulary) -> Vec<Vec<f64>> {
    let mut r = rng(derive_seed(spec.seed, "char-embedding"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..vocab.size())
        .map(|_| (0..spec.feature_dim).map(|_| normal.sample(&mut r)).collect())
        .collect()
}

/// Renders `text` as acoustics: each character's embedding repeated
/// `frames_per_char` times plus `N(0, noise_sigma²)` per component.
pub fn synthesize(
    text: &str,
    vocab: &Vocabulary,
    embeddings: &[Vec<f64>],
    spec: &CorpusSpec,
    rng: &mut Rng,
) -> Result<FeatureSequence> {
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::config(format!("noise: {e}")))?;
    let mut rows = Vec::with_capacity(text.len() * spec.frames_per_char);
    for (pos, c) in text.chars().enumerate() {
        let id = vocab
            .index_of(c)
            .ok_or(Error::OutOfVocabulary { ch: c, position: pos })?;
        for _ in 0..spec.frames_per_char {
            rows.push(embeddings[id].iter().map(|&v| v + noise.sample(rng)).collect());
        }
    }
    FeatureSequence::new(rows)
}

/// Summary counts from generation, used to check the configured rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenStats {
    pub words: usize,
    pub rare_words: usize,
}

pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    gen_corpus_with_stats(spec).map(|(c, _)| c)
}

/// Utterance domains are drawn uniformly from the tags plus an untagged pool.
pub fn gen_corpus_with_stats(spec: &CorpusSpec) -> Result<(Corpus, GenStats)> {
    let sampler = TranscriptSampler::new(spec)?;
    let vocab = spec.vocabulary()?;
    let embeddings = char_embeddings(spec, &vocab);
    let mut r = rng(derive_seed(spec.seed, "data"));
    let width = spec.utterances.max(1).to_string().len();
    let mut stats = GenStats::default();
    let mut corpus = Vec::with_capacity(spec.utterances);
    for i in 0..spec.utterances {
        let domain = r.random_range(0..sampler.domains.len());
        let (transcript, n, rare) = sampler.sample(domain, &mut r);
        stats.words += n;
        stats.rare_words += rare;
        let features = synthesize(&transcript, &vocab, &embeddings, spec, &mut r)?;
        corpus.push(Utterance {
            id: format!("utt{i:0width$}"),
            features,
            transcript,
        });
    }
    Ok((corpus, stats))
}

/// Text-only sample from one domain (or the untagged pool), e.g. to train an
/// external LM for that domain.
pub fn sample_transcripts(spec: &CorpusSpec, domain: Option<&str>, count: usize, seed: u64) -> Result<Vec<String>> {
    let sampler = TranscriptSampler::new(spec)?;
    let d = sampler.domain_index(domain)?;
    let mut r = rng(derive_seed(seed, "text"));
    Ok((0..count).map(|_| sampler.sample(d, &mut r).0).collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    transcript: String,
    features: Vec<Vec<f64>>,
}

pub fn save_corpus(corpus: &[Utterance], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for u in corpus {
        let rec = Record {
            id: u.id.clone(),
            transcript: u.transcript.clone(),
            features: u.features.to_rows(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSONL corpus. Transcripts are normalized; ids must be unique and
/// every utterance must share one feature dimension.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut corpus = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if !ids.insert(rec.id.clone()) {
            return Err(err(format!("duplicate utterance id `{}`", rec.id)));
        }
        let features = FeatureSequence::new(rec.features).map_err(|e| err(e.to_string()))?;
        if let Some(first) = corpus.first() {
            let first: &Utterance = first;
            if first.features.dim() != features.dim() {
                return Err(err(format!(
                    "feature dimension {} differs from {} earlier in the file",
                    features.dim(),
                    first.features.dim()
                )));
            }
        }
        corpus.push(Utterance {
            id: rec.id,
            features,
            transcript: normalize_text(&rec.transcript),
        });
    }
    Ok(corpus)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// Random train/dev/test split by `fractions`. With `held_out`, every
/// utterance containing one of that domain's words goes to test first and the
/// remainder is split by `fractions`.
pub fn split_corpus(
    corpus: &[Utterance],
    fractions: [f64; 3],
    seed: u64,
    domains: &BTreeMap<String, Vec<String>>,
    held_out: Option<&str>,
) -> Result<Split> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split fractions must be in [0, 1] and sum to 1"));
    }
    let held_words: BTreeSet<&str> = match held_out {
        Some(tag) => domains
            .get(tag)
            .ok_or_else(|| Error::config(format!("unknown domain `{tag}`")))?
            .iter()
            .map(String::as_str)
            .collect(),
        None => BTreeSet::new(),
    };
    let (held, mut rest): (Vec<usize>, Vec<usize>) = (0..corpus.len())
        .partition(|&i| corpus[i].transcript.split_whitespace().any(|w| held_words.contains(w)));
    rest.shuffle(&mut rng(derive_seed(seed, "split")));
    let n = rest.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_dev = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut train: Vec<usize> = rest[..n_train].to_vec();
    let mut dev: Vec<usize> = rest[n_train..n_train + n_dev].to_vec();
    let mut test: Vec<usize> = rest[n_train + n_dev..].to_vec();
    test.extend(held);
    let pick = |idx: &mut Vec<usize>| {
        idx.sort_unstable();
        idx.iter().map(|&i| corpus[i].clone()).collect::<Corpus>()
    };
    Ok(Split {
        train: pick(&mut train),
        dev: pick(&mut dev),
        test: pick(&mut test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> CorpusSpec {
        CorpusSpec {
            utterances: 200,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn default_spec_is_valid_and_matches_default_model_vocab() {
        let spec = CorpusSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.vocabulary().unwrap().size(), crate::model::ModelDims::default().vocab);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            CorpusSpec {
                common_words: vec![],
                ..small_spec()
            },
            CorpusSpec {
                rare_words: vec!["the".into()],
                ..small_spec()
            },
            CorpusSpec {
                common_words: vec!["caf\u{e9}".into()],
                domains: BTreeMap::new(),
                ..small_spec()
            },
            CorpusSpec {
                min_words: 3,
                max_words: 2,
                ..small_spec()
            },
            CorpusSpec {
                frames_per_char: 0,
                ..small_spec()
            },
        ];
        for spec in bad {
            assert!(matches!(gen_corpus(&spec), Err(Error::Config(_))), "{spec:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_corpus(&small_spec()).unwrap(), gen_corpus(&small_spec()).unwrap());
        let other = CorpusSpec {
            seed: 1,
            ..small_spec()
        };
        assert_ne!(gen_corpus(&small_spec()).unwrap(), gen_corpus(&other).unwrap());
    }

    #[test]
    fn noiseless_characters_have_identical_frames() {
        let spec = CorpusSpec {
            noise_sigma: 0.0,
            ..small_spec()
        };
        let vocab = spec.vocabulary().unwrap();
        let emb = char_embeddings(&spec, &vocab);
        for u in gen_corpus(&spec).unwrap() {
            assert_eq!(u.features.frames(), u.transcript.chars().count() * spec.frames_per_char);
            for (t, frame) in u.features.iter().enumerate() {
                let c = u.transcript.chars().nth(t / spec.frames_per_char).unwrap();
                assert_eq!(frame, emb[vocab.index_of(c).unwrap()].as_slice());
            }
        }
    }

    #[test]
    fn noiseless_frames_are_separable_by_nearest_centroid() {
        let spec = CorpusSpec {
            noise_sigma: 0.0,
            ..small_spec()
        };
        let vocab = spec.vocabulary().unwrap();
        let corpus = gen_corpus(&spec).unwrap();
        // Centroids estimated from the data itself, one per character.
        let mut sums: BTreeMap<char, (Vec<f64>, usize)> = BTreeMap::new();
        for u in &corpus {
            for (t, frame) in u.features.iter().enumerate() {
                let c = u.transcript.chars().nth(t / spec.frames_per_char).unwrap();
                let e = sums.entry(c).or_insert_with(|| (vec![0.0; frame.len()], 0));
                e.0.iter_mut().zip(frame).for_each(|(s, v)| *s += v);
                e.1 += 1;
            }
        }
        let centroids: Vec<(char, Vec<f64>)> = sums
            .into_iter()
            .map(|(c, (s, n))| (c, s.into_iter().map(|v| v / n as f64).collect()))
            .collect();
        assert!(centroids.len() > 20 && centroids.len() <= vocab.size() - 1);
        for u in &corpus {
            for (t, frame) in u.features.iter().enumerate() {
                let truth = u.transcript.chars().nth(t / spec.frames_per_char).unwrap();
                let dist = |c: &[f64]| c.iter().zip(frame).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let best = centroids
                    .iter()
                    .min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1)))
                    .unwrap();
                assert_eq!(best.0, truth);
            }
        }
    }

    #[test]
    fn rare_word_rate_tracks_configuration() {
        let spec = CorpusSpec {
            utterances: 10_000,
            rare_prob: 0.05,
            domains: BTreeMap::new(),
            ..CorpusSpec::default()
        };
        let (corpus, stats) = gen_corpus_with_stats(&spec).unwrap();
        // Recount from the transcripts rather than trusting the stats.
        let rare: HashSet<&str> = spec.rare_words.iter().map(String::as_str).collect();
        let (mut words, mut hits) = (0, 0);
        for u in &corpus {
            for w in u.transcript.split_whitespace() {
                words += 1;
                hits += usize::from(rare.contains(w));
            }
        }
        assert_eq!((words, hits), (stats.words, stats.rare_words));
        let rate = hits as f64 / words as f64;
        assert!((rate - 0.05).abs() <= 0.2 * 0.05, "rare rate {rate}");
    }

    #[test]
    fn domain_words_stay_in_their_domain() {
        let spec = small_spec();
        let text = sample_transcripts(&spec, Some("sports"), 300, 4).unwrap();
        let foreign: HashSet<&str> = ["cook", "soup", "train", "fjord"].into_iter().collect();
        assert!(text.iter().all(|t| t.split_whitespace().all(|w| !foreign.contains(w))));
        assert!(text.iter().any(|t| t.split_whitespace().any(|w| w == "game")));
        assert!(sample_transcripts(&spec, Some("opera"), 1, 0).is_err());
        let untagged = sample_transcripts(&spec, None, 300, 4).unwrap();
        assert!(untagged.iter().all(|t| !t.split_whitespace().any(|w| w == "game")));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = gen_corpus(&CorpusSpec {
            utterances: 30,
            ..CorpusSpec::default()
        })
        .unwrap();
        save_corpus(&corpus, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus);

        save_corpus(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert!(load_corpus(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_file_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = gen_corpus(&CorpusSpec {
            utterances: 3,
            ..CorpusSpec::default()
        })
        .unwrap();
        save_corpus(&corpus, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 20]).unwrap();
        match load_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = format!("{}{}", text.lines().next().unwrap(), "\n").repeat(2);
        std::fs::write(&path, dup).unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn random_splits() {
        let spec = small_spec();
        let corpus = gen_corpus(&spec).unwrap();
        let all = split_corpus(&corpus, [1.0, 0.0, 0.0], 1, &spec.domains, None).unwrap();
        assert_eq!(all.train, corpus);
        assert!(all.dev.is_empty() && all.test.is_empty());

        let a = split_corpus(&corpus, [0.8, 0.1, 0.1], 5, &spec.domains, None).unwrap();
        assert_eq!(a, split_corpus(&corpus, [0.8, 0.1, 0.1], 5, &spec.domains, None).unwrap());
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (160, 20, 20));
        let mut ids: Vec<&str> = a.train.iter().chain(&a.dev).chain(&a.test).map(|u| u.id.as_str()).collect();
        ids.sort_unstable();
        assert_eq!(ids, corpus.iter().map(|u| u.id.as_str()).collect::<Vec<_>>());

        assert!(split_corpus(&corpus, [0.5, 0.1, 0.1], 5, &spec.domains, None).is_err());
    }

    #[test]
    fn domain_holdout_has_no_lexical_overlap() {
        let spec = small_spec();
        let corpus = gen_corpus(&spec).unwrap();
        let s = split_corpus(&corpus, [0.8, 0.1, 0.1], 2, &spec.domains, Some("travel")).unwrap();
        let held: HashSet<&str> = spec.domains["travel"].iter().map(String::as_str).collect();
        for u in s.train.iter().chain(&s.dev) {
            assert!(u.transcript.split_whitespace().all(|w| !held.contains(w)), "{}", u.transcript);
        }
        assert!(s.test.iter().any(|u| u.transcript.split_whitespace().any(|w| held.contains(w))));
        assert!(matches!(
            split_corpus(&corpus, [0.8, 0.1, 0.1], 2, &spec.domains, Some("opera")),
            Err(Error::Config(_))
        ));
    }
}
