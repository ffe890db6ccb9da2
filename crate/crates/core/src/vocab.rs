//! Character vocabulary, text normalization and transcript encoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Blank (ε) always lives at index 0.
pub const BLANK: usize = 0;

pub const BLANK_SYMBOL: &str = "<b>";
pub const SPACE_SYMBOL: &str = "<sp>";

/// Ordered, duplicate-free token inventory. Index 0 is blank; every other
/// token is a single character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<char>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary with blank at 0 followed by `chars` in order.
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut tokens = vec!['\0'];
        let mut index = HashMap::new();
        for c in chars {
            if c == '\0' {
                return Err(Error::config("NUL cannot be a vocabulary token"));
            }
            if index.insert(c, tokens.len()).is_some() {
                return Err(Error::config(format!("duplicate vocabulary token {c:?}")));
            }
            tokens.push(c);
        }
        if tokens.len() < 2 {
            return Err(Error::config(
                "vocabulary needs blank plus at least one emitting token",
            ));
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Blank plus the distinct characters of `alphabet`, in first-seen order.
    pub fn from_alphabet(alphabet: &str) -> Result<Self> {
        let mut seen = Vec::new();
        for c in alphabet.chars() {
            if !seen.contains(&c) {
                seen.push(c);
            }
        }
        Self::new(seen)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn blank_index(&self) -> usize {
        BLANK
    }

    /// Emitting characters in index order (blank excluded).
    pub fn chars(&self) -> &[char] {
        &self.tokens[1..]
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_of(&self, id: usize) -> Option<char> {
        (id != BLANK).then(|| self.tokens.get(id).copied()).flatten()
    }

    /// Stable content hash, used to tie LM and checkpoint files to a vocabulary.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for line in self.file_lines() {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn file_lines(&self) -> Vec<String> {
        let mut lines = vec![BLANK_SYMBOL.to_string()];
        lines.extend(self.chars().iter().map(|&c| match c {
            ' ' => SPACE_SYMBOL.to_string(),
            c => c.to_string(),
        }));
        lines
    }

    /// One token per line; line 0 is `<b>`, space is written `<sp>`.
    pub fn to_file_string(&self) -> String {
        let mut s = self.file_lines().join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, BLANK_SYMBOL)) => {}
            Some((_, other)) => {
                return Err(err(1, format!("first token must be {BLANK_SYMBOL}, found {other:?}")))
            }
            None => return Err(err(1, "empty vocabulary file".into())),
        }
        let mut chars = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let c = if line == SPACE_SYMBOL {
                ' '
            } else {
                let mut it = line.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => c,
                    _ => return Err(err(i + 1, format!("token {line:?} is not a single character"))),
                }
            };
            if chars.contains(&c) {
                return Err(err(i + 1, format!("duplicate token {line:?}")));
            }
            chars.push(c);
        }
        Self::new(chars).map_err(|e| err(1, e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

/// Lowercases, collapses whitespace runs to one space and trims the ends.
pub fn normalize_text(text: &str) -> String {
    let lower = text.to_lowercase();
    lower.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Label ids of a transcript; never contains blank.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self> {
        for (pos, &id) in ids.iter().enumerate() {
            if id == BLANK || id >= vocab_size {
                return Err(Error::usage(format!(
                    "label {id} at position {pos} is blank or outside a vocabulary of {vocab_size}"
                )));
            }
        }
        Ok(LabelSequence(ids))
    }

    pub fn empty() -> Self {
        LabelSequence(Vec::new())
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Appends a non-blank label. Callers must have checked the range.
    pub(crate) fn push(&mut self, id: usize) {
        debug_assert_ne!(id, BLANK);
        self.0.push(id);
    }
}

pub fn encode_transcript(text: &str, vocab: &Vocabulary) -> Result<LabelSequence> {
    let norm = normalize_text(text);
    if norm.is_empty() {
        return Err(Error::usage("transcript is empty after normalization"));
    }
    let ids = norm
        .chars()
        .enumerate()
        .map(|(position, ch)| {
            vocab
                .index_of(ch)
                .ok_or(Error::OutOfVocabulary { ch, position })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabelSequence(ids))
}

pub fn decode_labels(ids: &LabelSequence, vocab: &Vocabulary) -> Result<String> {
    ids.ids()
        .iter()
        .map(|&id| {
            vocab
                .char_of(id)
                .ok_or_else(|| Error::usage(format!("label {id} is not an emitting token")))
        })
        .collect()
}
