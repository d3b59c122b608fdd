//! Datasets, tokenization, vocabularies, pre-trained vectors and few-shot
//! splits.
//!
//! Dataset files hold one block per sentence: `token<TAB>bio-slot` lines,
//! then `#intent<TAB>label`, blocks separated by blank lines.

mod embeddings;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{load_embeddings, read_vectors, EmbeddingTable};
pub use split::{
    few_shot_split_intent, few_shot_split_slot, partial_few_shot_intent, slot_mentions,
    SplitKind, SplitManifest,
};

pub const OUTSIDE: &str = "O";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// Position in the source file; split manifests refer to it.
    pub id: usize,
    pub tokens: Vec<String>,
    pub intent: String,
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
    FewShot(usize),
    PartialFewShot(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub intent_labels: Vec<String>,
    /// BIO slot labels, `O` included.
    pub slot_labels: Vec<String>,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn new(sentences: Vec<Sentence>, split_tag: SplitTag) -> Self {
        let intent_labels: BTreeSet<_> = sentences.iter().map(|s| s.intent.clone()).collect();
        let slot_labels: BTreeSet<_> = sentences.iter().flat_map(|s| s.slots.iter().cloned()).collect();
        Self {
            sentences,
            intent_labels: intent_labels.into_iter().collect(),
            slot_labels: slot_labels.into_iter().collect(),
            split_tag,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Keeps the sentences whose ids are listed, in dataset order.
    pub fn subset(&self, ids: &BTreeSet<usize>, split_tag: SplitTag) -> Dataset {
        let sentences = self
            .sentences
            .iter()
            .filter(|s| ids.contains(&s.id))
            .cloned()
            .collect();
        Dataset::new(sentences, split_tag)
    }

    pub fn intent_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.sentences {
            *counts.entry(s.intent.as_str()).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sentences.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            for (tok, slot) in s.tokens.iter().zip(&s.slots) {
                let _ = writeln!(out, "{tok}\t{slot}");
            }
            let _ = writeln!(out, "#intent\t{}", s.intent);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// The slot type named by a BIO label (`B-toloc.city` -> `toloc.city`).
pub fn slot_type(label: &str) -> Option<&str> {
    label
        .strip_prefix("B-")
        .or_else(|| label.strip_prefix("I-"))
}

/// Checks that every `I-x` follows `B-x` or `I-x`.
pub fn check_bio<S: AsRef<str>>(labels: &[S]) -> std::result::Result<(), usize> {
    let mut prev: Option<&str> = None;
    for (i, label) in labels.iter().enumerate() {
        let label = label.as_ref();
        if let Some(ty) = label.strip_prefix("I-") {
            if prev != Some(ty) {
                return Err(i);
            }
        } else if label != OUTSIDE && !label.starts_with("B-") {
            return Err(i);
        }
        prev = slot_type(label);
    }
    Ok(())
}

pub fn parse_dataset(text: &str, origin: &Path, split_tag: SplitTag) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut slots = Vec::new();
    let mut slot_lines = Vec::new();
    let mut intent: Option<String> = None;
    let mut block_start = 1;

    let mut finish = |tokens: &mut Vec<String>,
                      slots: &mut Vec<String>,
                      slot_lines: &mut Vec<usize>,
                      intent: &mut Option<String>,
                      block_start: usize|
     -> Result<()> {
        if tokens.is_empty() && intent.is_none() {
            return Ok(());
        }
        let Some(label) = intent.take() else {
            return Err(err(block_start, "sentence block without `#intent` line".into()));
        };
        if tokens.is_empty() {
            return Err(err(block_start, "sentence block without tokens".into()));
        }
        if let Err(i) = check_bio(slots) {
            return Err(err(
                slot_lines[i],
                format!("invalid BIO transition to `{}`", slots[i]),
            ));
        }
        sentences.push(Sentence {
            id: sentences.len(),
            tokens: std::mem::take(tokens),
            intent: label,
            slots: std::mem::take(slots),
        });
        slot_lines.clear();
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut tokens, &mut slots, &mut slot_lines, &mut intent, block_start)?;
            block_start = lineno + 1;
            continue;
        }
        if intent.is_some() {
            return Err(err(lineno, "content after `#intent` line in the same block".into()));
        }
        if let Some(rest) = line.strip_prefix("#intent") {
            let label = rest.trim();
            if label.is_empty() {
                return Err(err(lineno, "empty intent label".into()));
            }
            intent = Some(label.to_string());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [tok, slot] if !tok.is_empty() && !slot.trim().is_empty() => {
                tokens.push(tok.to_string());
                slots.push(slot.trim().to_string());
                slot_lines.push(lineno);
            }
            _ => {
                return Err(err(
                    lineno,
                    format!("expected `token<TAB>slot`, found {} column(s)", fields.len()),
                ))
            }
        }
    }
    finish(&mut tokens, &mut slots, &mut slot_lines, &mut intent, block_start)?;
    Ok(Dataset::new(sentences, split_tag))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_as(path, SplitTag::Train)
}

pub fn load_dataset_as(path: impl AsRef<Path>, split_tag: SplitTag) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path, split_tag)
}

/// Whitespace split, lower-casing, and possessive splitting
/// (`Miami's` -> `miami`, `'s`).
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in raw.split_whitespace() {
        let mut stem = word.to_lowercase();
        let mut possessives = 0;
        while let Some(rest) = stem.strip_suffix("'s").filter(|r| !r.is_empty()) {
            stem.truncate(rest.len());
            possessives += 1;
        }
        out.push(stem);
        out.extend(std::iter::repeat_n("'s".to_string(), possessives));
    }
    out
}

pub const UNK: &str = "<unk>";

/// Word index with `<unk>` at position 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            words: vec![UNK.to_string()],
            index: HashMap::new(),
        };
        vocab.index.insert(UNK.to_string(), 0);
        for w in words {
            let w = w.into();
            if !vocab.index.contains_key(&w) {
                vocab.index.insert(w.clone(), vocab.words.len());
                vocab.words.push(w);
            }
        }
        vocab
    }

    pub fn from_words(words: Vec<String>) -> Self {
        Self::new(words.into_iter().filter(|w| w != UNK))
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
