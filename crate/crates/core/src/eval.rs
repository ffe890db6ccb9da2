//! Error-rate scoring: Levenshtein alignment, corpus WER/CER, rare-word
//! metrics and an optional phoneme error rate.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignOp {
    Match { r: usize, h: usize },
    Sub { r: usize, h: usize },
    Del { r: usize },
    Ins { h: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Alignment {
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
    /// In reference/hypothesis order.
    pub ops: Vec<AlignOp>,
}

impl Alignment {
    pub fn errors(&self) -> usize {
        self.subs + self.dels + self.ins
    }
}

/// Minimum-edit alignment with unit costs. On equal-cost paths the backtrace
/// prefers a diagonal step (match or substitution), then an insertion, then a
/// deletion.
pub fn edit_align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = d[i * w + j - 1] + 1;
            let del = d[(i - 1) * w + j] + 1;
            d[i * w + j] = diag.min(ins).min(del);
        }
    }

    let mut out = Alignment::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                i -= 1;
                j -= 1;
                if same {
                    out.ops.push(AlignOp::Match { r: i, h: j });
                } else {
                    out.subs += 1;
                    out.ops.push(AlignOp::Sub { r: i, h: j });
                }
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            j -= 1;
            out.ins += 1;
            out.ops.push(AlignOp::Ins { h: j });
        } else {
            i -= 1;
            out.dels += 1;
            out.ops.push(AlignOp::Del { r: i });
        }
    }
    out.ops.reverse();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Word,
    Char,
}

/// Words are whitespace-separated tokens. Characters are those of the text
/// with whitespace collapsed to single spaces, so word boundaries count.
pub fn tokenize(text: &str, unit: Unit) -> Vec<String> {
    match unit {
        Unit::Word => text.split_whitespace().map(str::to_owned).collect(),
        Unit::Char => text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .chars()
            .map(String::from)
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
    pub ref_len: usize,
}

impl ErrorCounts {
    pub fn of(reference: &[String], hypothesis: &[String]) -> Self {
        let a = edit_align(reference, hypothesis);
        ErrorCounts {
            subs: a.subs,
            dels: a.dels,
            ins: a.ins,
            ref_len: reference.len(),
        }
    }

    pub fn errors(&self) -> usize {
        self.subs + self.dels + self.ins
    }

    /// Percentage; `None` for an empty reference.
    pub fn rate(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| 100.0 * self.errors() as f64 / self.ref_len as f64)
    }

    fn add(&mut self, other: &ErrorCounts) {
        self.subs += other.subs;
        self.dels += other.dels;
        self.ins += other.ins;
        self.ref_len += other.ref_len;
    }
}

/// Micro-averaged error rate `100 · Σ(S + D + I) / ΣN` over `(reference,
/// hypothesis)` pairs.
pub fn corpus_error_rate<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)], unit: Unit) -> Result<f64> {
    let mut total = ErrorCounts::default();
    for (r, h) in pairs {
        total.add(&ErrorCounts::of(&tokenize(r.as_ref(), unit), &tokenize(h.as_ref(), unit)));
    }
    total
        .rate()
        .ok_or_else(|| Error::usage("error rate is undefined for an empty reference set"))
}

pub const DEFAULT_RARE_THRESHOLD: u64 = 20;

/// Training-corpus word counts. A word is rare when its count is strictly
/// below the threshold, which includes words never seen in training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RareWordTable {
    counts: BTreeMap<String, u64>,
    threshold: u64,
}

impl RareWordTable {
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn is_rare(&self, word: &str) -> bool {
        self.count(word) < self.threshold
    }

    /// Training words that are rare (words absent from training are not listed).
    pub fn rare_training_words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts
            .iter()
            .filter(|(_, &c)| c < self.threshold)
            .map(|(w, &c)| (w.as_str(), c))
    }
}

pub fn rare_table<S: AsRef<str>>(train_transcripts: &[S], threshold: u64) -> Result<RareWordTable> {
    if threshold == 0 {
        return Err(Error::config("rare-word threshold must be at least 1"));
    }
    let mut counts = BTreeMap::new();
    for t in train_transcripts {
        for w in t.as_ref().split_whitespace() {
            *counts.entry(w.to_owned()).or_insert(0) += 1;
        }
    }
    Ok(RareWordTable { counts, threshold })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RareMetrics {
    /// Rare reference words seen.
    pub words: usize,
    /// Rare words whose aligned hypothesis word differs (or is missing).
    pub words_wrong: usize,
    /// Character edits between each rare word and its aligned hypothesis word.
    pub char_errors: usize,
    pub char_ref_len: usize,
}

impl RareMetrics {
    pub fn cer(&self) -> f64 {
        100.0 * self.char_errors as f64 / self.char_ref_len as f64
    }

    pub fn substitution_rate(&self) -> f64 {
        100.0 * self.words_wrong as f64 / self.words as f64
    }

    fn add(&mut self, other: &RareMetrics) {
        self.words += other.words;
        self.words_wrong += other.words_wrong;
        self.char_errors += other.char_errors;
        self.char_ref_len += other.char_ref_len;
    }
}

/// Pairs each rare reference word with its word-alignment partner (`None` for
/// a deletion).
fn rare_partners<'a>(reference: &'a [String], hypothesis: &'a [String], table: &RareWordTable) -> Vec<(&'a str, Option<&'a str>)> {
    edit_align(reference, hypothesis)
        .ops
        .into_iter()
        .filter_map(|op| match op {
            AlignOp::Match { r, h } | AlignOp::Sub { r, h } => Some((r, Some(hypothesis[h].as_str()))),
            AlignOp::Del { r } => Some((r, None)),
            AlignOp::Ins { .. } => None,
        })
        .filter(|(r, _)| table.is_rare(&reference[*r]))
        .map(|(r, h)| (reference[r].as_str(), h))
        .collect()
}

fn utterance_rare_metrics(reference: &str, hypothesis: &str, table: &RareWordTable) -> RareMetrics {
    let r = tokenize(reference, Unit::Word);
    let h = tokenize(hypothesis, Unit::Word);
    let mut m = RareMetrics::default();
    for (word, partner) in rare_partners(&r, &h, table) {
        let rc: Vec<char> = word.chars().collect();
        let hc: Vec<char> = partner.map(|p| p.chars().collect()).unwrap_or_default();
        m.words += 1;
        m.words_wrong += usize::from(partner != Some(word));
        m.char_errors += edit_align(&rc, &hc).errors();
        m.char_ref_len += rc.len();
    }
    m
}

/// Rare-word CER and substitution rate over `(reference, hypothesis)` pairs;
/// `None` when no reference word is rare.
pub fn rare_word_metrics<R: AsRef<str>, H: AsRef<str>>(pairs: &[(R, H)], table: &RareWordTable) -> Option<RareMetrics> {
    let mut total = RareMetrics::default();
    for (r, h) in pairs {
        total.add(&utterance_rare_metrics(r.as_ref(), h.as_ref(), table));
    }
    (total.words > 0).then_some(total)
}

/// Word → phoneme mapping. Words missing from the table are spelled out one
/// pseudo-phoneme per character.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct G2pTable {
    entries: HashMap<String, Vec<String>>,
}

impl G2pTable {
    /// One entry per line: `word<TAB>ph1 ph2 …`. Blank lines are ignored.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: message.to_owned(),
            };
            let (word, phones) = line.split_once('\t').ok_or_else(|| parse_err("expected word<TAB>phonemes"))?;
            let phones: Vec<String> = phones.split_whitespace().map(str::to_owned).collect();
            if word.is_empty() || phones.is_empty() {
                return Err(parse_err("empty word or pronunciation"));
            }
            entries.insert(word.to_owned(), phones);
        }
        Ok(G2pTable { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn phonemes(&self, word: &str) -> Vec<String> {
        match self.entries.get(word) {
            Some(p) => p.clone(),
            None => word.chars().map(String::from).collect(),
        }
    }

    fn transcribe(&self, words: &[&str]) -> Vec<String> {
        words.iter().flat_map(|w| self.phonemes(w)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceEval {
    pub id: String,
    pub words: ErrorCounts,
    pub chars: ErrorCounts,
    pub reference: String,
    pub hypothesis: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub words: ErrorCounts,
    pub chars: ErrorCounts,
    pub rare: Option<RareMetrics>,
    /// Phoneme counts, present when a G2P table was supplied.
    pub phonemes: Option<ErrorCounts>,
    pub rare_phonemes: Option<ErrorCounts>,
    pub utterances: Vec<UtteranceEval>,
}

struct UtteranceScores {
    eval: UtteranceEval,
    rare: RareMetrics,
    phonemes: Option<(ErrorCounts, ErrorCounts)>,
}

fn score_utterance(pair: &EvalPair, table: Option<&RareWordTable>, g2p: Option<&G2pTable>) -> UtteranceScores {
    let rw = tokenize(&pair.reference, Unit::Word);
    let hw = tokenize(&pair.hypothesis, Unit::Word);
    let words = ErrorCounts::of(&rw, &hw);
    let chars = ErrorCounts::of(&tokenize(&pair.reference, Unit::Char), &tokenize(&pair.hypothesis, Unit::Char));
    let rare = match table {
        Some(t) => utterance_rare_metrics(&pair.reference, &pair.hypothesis, t),
        None => RareMetrics::default(),
    };
    let phonemes = g2p.map(|g| {
        let r: Vec<&str> = rw.iter().map(String::as_str).collect();
        let h: Vec<&str> = hw.iter().map(String::as_str).collect();
        let all = ErrorCounts::of(&g.transcribe(&r), &g.transcribe(&h));
        let mut rare_counts = ErrorCounts::default();
        if let Some(t) = table {
            for (word, partner) in rare_partners(&rw, &hw, t) {
                let hp = partner.map(|p| g.phonemes(p)).unwrap_or_default();
                rare_counts.add(&ErrorCounts::of(&g.phonemes(word), &hp));
            }
        }
        (all, rare_counts)
    });
    UtteranceScores {
        eval: UtteranceEval {
            id: pair.id.clone(),
            words,
            chars,
            reference: pair.reference.clone(),
            hypothesis: pair.hypothesis.clone(),
        },
        rare,
        phonemes,
    }
}

pub fn evaluate(pairs: &[EvalPair], table: Option<&RareWordTable>, g2p: Option<&G2pTable>, exec: Exec) -> Result<EvalReport> {
    let scored = exec.map(pairs, |_, p| score_utterance(p, table, g2p));
    let mut words = ErrorCounts::default();
    let mut chars = ErrorCounts::default();
    let mut rare = RareMetrics::default();
    let mut phon = ErrorCounts::default();
    let mut rare_phon = ErrorCounts::default();
    let mut utterances = Vec::with_capacity(scored.len());
    for s in scored {
        words.add(&s.eval.words);
        chars.add(&s.eval.chars);
        rare.add(&s.rare);
        if let Some((a, r)) = s.phonemes {
            phon.add(&a);
            rare_phon.add(&r);
        }
        utterances.push(s.eval);
    }
    if words.ref_len == 0 {
        return Err(Error::usage("error rate is undefined for an empty reference set"));
    }
    Ok(EvalReport {
        words,
        chars,
        rare: (rare.words > 0).then_some(rare),
        phonemes: g2p.map(|_| phon),
        rare_phonemes: (g2p.is_some() && rare_phon.ref_len > 0).then_some(rare_phon),
        utterances,
    })
}

/// Summary keys, in the order [`EvalReport::write_tsv`] emits them.
pub const SUMMARY_FIELDS: [&str; 16] = [
    "utterances",
    "ref_words",
    "word_sub",
    "word_del",
    "word_ins",
    "wer",
    "ref_chars",
    "char_sub",
    "char_del",
    "char_ins",
    "cer",
    "rare_words",
    "rare_cer",
    "rare_sub_rate",
    "per",
    "rare_per",
];

/// Per-utterance columns, after a blank line and this header.
pub const UTTERANCE_FIELDS: [&str; 9] = [
    "id",
    "ref_words",
    "word_errors",
    "wer",
    "ref_chars",
    "char_errors",
    "cer",
    "reference",
    "hypothesis",
];

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
}

impl EvalReport {
    pub fn wer(&self) -> f64 {
        self.words.rate().expect("non-empty reference checked in evaluate")
    }

    pub fn cer(&self) -> f64 {
        self.chars.rate().expect("non-empty reference checked in evaluate")
    }

    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let w = &self.words;
        let c = &self.chars;
        let values = [
            self.utterances.len().to_string(),
            w.ref_len.to_string(),
            w.subs.to_string(),
            w.dels.to_string(),
            w.ins.to_string(),
            fmt_rate(w.rate()),
            c.ref_len.to_string(),
            c.subs.to_string(),
            c.dels.to_string(),
            c.ins.to_string(),
            fmt_rate(c.rate()),
            self.rare.map_or(0, |r| r.words).to_string(),
            fmt_rate(self.rare.map(|r| r.cer())),
            fmt_rate(self.rare.map(|r| r.substitution_rate())),
            fmt_rate(self.phonemes.and_then(|p| p.rate())),
            fmt_rate(self.rare_phonemes.and_then(|p| p.rate())),
        ];
        SUMMARY_FIELDS.into_iter().zip(values).collect()
    }

    pub fn write_tsv(&self, out: &mut impl Write, per_utterance: bool) -> std::io::Result<()> {
        for (k, v) in self.summary() {
            writeln!(out, "{k}\t{v}")?;
        }
        if per_utterance {
            writeln!(out)?;
            writeln!(out, "{}", UTTERANCE_FIELDS.join("\t"))?;
            for u in &self.utterances {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    u.id,
                    u.words.ref_len,
                    u.words.errors(),
                    fmt_rate(u.words.rate()),
                    u.chars.ref_len,
                    u.chars.errors(),
                    fmt_rate(u.chars.rate()),
                    u.reference,
                    u.hypothesis
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::seed::rng;

    /// Distance-only recursion from the front of both sequences, memoized.
    fn brute_distance(a: &[u8], b: &[u8]) -> usize {
        fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
            if i == a.len() {
                return b.len() - j;
            }
            if j == b.len() {
                return a.len() - i;
            }
            if let Some(&v) = memo.get(&(i, j)) {
                return v;
            }
            let v = if a[i] == b[j] {
                go(a, b, i + 1, j + 1, memo)
            } else {
                1 + go(a, b, i + 1, j + 1, memo)
                    .min(go(a, b, i + 1, j, memo))
                    .min(go(a, b, i, j + 1, memo))
            };
            memo.insert((i, j), v);
            v
        }
        go(a, b, 0, 0, &mut HashMap::new())
    }

    fn words(s: &str) -> Vec<String> {
        tokenize(s, Unit::Word)
    }

    #[test]
    fn identical_sequences_align_without_errors() {
        let a = edit_align(&words("a b c"), &words("a b c"));
        assert_eq!((a.subs, a.dels, a.ins), (0, 0, 0));
        assert_eq!(a.ops.len(), 3);
    }

    #[test]
    fn single_substitution() {
        let a = edit_align(&words("a b c"), &words("a x c"));
        assert_eq!((a.subs, a.dels, a.ins), (1, 0, 0));
        assert_eq!(a.ops[1], AlignOp::Sub { r: 1, h: 1 });
    }

    #[test]
    fn ties_prefer_substitution_then_insertion() {
        // "a" vs "b": one substitution beats delete+insert.
        let a = edit_align(&['a'], &['b']);
        assert_eq!(a.ops, vec![AlignOp::Sub { r: 0, h: 0 }]);
        // "ab" vs "ba": substitutions (2) tie with del+ins (2).
        let a = edit_align(&['a', 'b'], &['b', 'a']);
        assert_eq!((a.subs, a.dels, a.ins), (2, 0, 0));
        // "aba" vs "bab": at the end, insertion and deletion tie and the
        // diagonal does not; the insertion is taken.
        let a = edit_align(&['a', 'b', 'a'], &['b', 'a', 'b']);
        assert_eq!(
            a.ops,
            vec![
                AlignOp::Del { r: 0 },
                AlignOp::Match { r: 1, h: 0 },
                AlignOp::Match { r: 2, h: 1 },
                AlignOp::Ins { h: 2 },
            ]
        );
    }

    #[test]
    fn distance_matches_brute_force_on_random_pairs() {
        let mut r = rng(10);
        for _ in 0..1000 {
            let n = r.random_range(0..9);
            let m = r.random_range(0..9);
            let a: Vec<u8> = (0..n).map(|_| r.random_range(0..4)).collect();
            let b: Vec<u8> = (0..m).map(|_| r.random_range(0..4)).collect();
            let al = edit_align(&a, &b);
            assert_eq!(al.errors(), brute_distance(&a, &b), "{a:?} {b:?}");
            let refs = al.ops.iter().filter(|o| !matches!(o, AlignOp::Ins { .. })).count();
            let hyps = al.ops.iter().filter(|o| !matches!(o, AlignOp::Del { .. })).count();
            assert_eq!((refs, hyps), (n, m));
        }
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(
            a in prop::collection::vec(0u8..3, 0..7),
            b in prop::collection::vec(0u8..3, 0..7),
            c in prop::collection::vec(0u8..3, 0..7),
        ) {
            let d = |x: &[u8], y: &[u8]| edit_align(x, y).errors();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
            prop_assert_eq!(d(&a, &a), 0);
        }
    }

    #[test]
    fn corpus_rates_by_hand() {
        assert_eq!(corpus_error_rate(&[("a b", "a b")], Unit::Word).unwrap(), 0.0);
        assert_eq!(corpus_error_rate(&[("a b", "a")], Unit::Word).unwrap(), 50.0);
        assert_eq!(corpus_error_rate(&[("a b c", "")], Unit::Word).unwrap(), 100.0);
        // "ab cd" → "ab"; three characters gone out of five.
        assert_eq!(corpus_error_rate(&[("ab cd", "ab")], Unit::Char).unwrap(), 60.0);
        // Micro-average: 1 error over 4 words, not the mean of 50% and 0%.
        let pairs = [("a b", "a"), ("c d", "c d")];
        assert_eq!(corpus_error_rate(&pairs, Unit::Word).unwrap(), 25.0);
        assert!(corpus_error_rate(&[("", "x")], Unit::Word).is_err());
        assert!(corpus_error_rate::<&str, &str>(&[], Unit::Word).is_err());
    }

    #[test]
    fn corpus_rate_ignores_utterance_order() {
        let mut pairs = vec![("a b c", "a c"), ("d e", "d x e"), ("f", "g"), ("h i j k", "h i j k")];
        let before = corpus_error_rate(&pairs, Unit::Word).unwrap();
        pairs.reverse();
        pairs.swap(0, 2);
        assert_eq!(corpus_error_rate(&pairs, Unit::Word).unwrap(), before);
    }

    #[test]
    fn rare_threshold_is_strict() {
        let mut train = vec!["often"; 20];
        train.extend(vec!["sometimes"; 19]);
        let t = rare_table(&train, 20).unwrap();
        assert!(!t.is_rare("often"));
        assert!(t.is_rare("sometimes"));
        assert!(t.is_rare("never"));
        assert_eq!(t.count("often"), 20);
        let listed: Vec<&str> = t.rare_training_words().map(|(w, _)| w).collect();
        assert_eq!(listed, vec!["sometimes"]);
        assert!(rare_table(&train, 0).is_err());
    }

    #[test]
    fn rare_metrics_by_hand() {
        let t = rare_table(&["x"; 20], 20).unwrap();
        assert_eq!(rare_word_metrics(&[("x x", "x y")], &t), None);

        let m = rare_word_metrics(&[("x vicky", "x vikkee")], &t).unwrap();
        assert_eq!((m.words, m.words_wrong, m.char_errors, m.char_ref_len), (1, 1, 3, 5));
        assert_eq!(m.cer(), 60.0);
        assert_eq!(m.substitution_rate(), 100.0);

        let m = rare_word_metrics(&[("vicky x", "vicky x")], &t).unwrap();
        assert_eq!((m.words_wrong, m.char_errors), (0, 0));

        // A deleted rare word costs all of its characters.
        let m = rare_word_metrics(&[("x bob x", "x x")], &t).unwrap();
        assert_eq!((m.words_wrong, m.char_errors, m.char_ref_len), (1, 3, 3));
    }

    #[test]
    fn g2p_table_parses_and_falls_back_to_letters() {
        let g = G2pTable::parse("vicky\tv ih k iy\n\nbob\tb aa b\n", Path::new("g2p.tsv")).unwrap();
        assert_eq!(g.phonemes("vicky"), vec!["v", "ih", "k", "iy"]);
        assert_eq!(g.phonemes("ab"), vec!["a", "b"]);
        let err = G2pTable::parse("ok\to k\nbroken\n", Path::new("g2p.tsv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn report_summary_and_tsv() {
        let pairs = vec![
            EvalPair {
                id: "u1".into(),
                reference: "x vicky".into(),
                hypothesis: "x vikkee".into(),
            },
            EvalPair {
                id: "u2".into(),
                reference: "x x".into(),
                hypothesis: "x".into(),
            },
        ];
        let t = rare_table(&["x"; 20], 20).unwrap();
        let g = G2pTable::parse("vicky\tv ih k iy\nvikkee\tv ih k iy\n", Path::new("g")).unwrap();
        let r = evaluate(&pairs, Some(&t), Some(&g), Exec::Serial).unwrap();
        assert_eq!(r.wer(), 50.0);
        assert_eq!(r.rare.unwrap().words, 1);
        // Both spellings share a pronunciation, so the rare PER is zero.
        assert_eq!(r.rare_phonemes.unwrap().rate(), Some(0.0));
        let mut buf = Vec::new();
        r.write_tsv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<&str> = text.lines().take(16).map(|l| l.split('\t').next().unwrap()).collect();
        assert_eq!(keys, SUMMARY_FIELDS);
        assert!(text.contains("wer\t50.0000\n"));
        assert!(text.contains("\nu2\t2\t1\t50.0000\t"));

        let plain = evaluate(&pairs, None, None, Exec::Parallel).unwrap();
        assert!(plain.summary().iter().any(|(k, v)| *k == "rare_cer" && v == "NA"));
        assert!(plain.summary().iter().any(|(k, v)| *k == "per" && v == "NA"));
    }
}
