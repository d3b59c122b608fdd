use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Sentence, Vocab};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rules::{CompiledRuleSet, Granularity, Polarity, TokenizedText};

use super::Task;

/// Row 0 of every tag table.
pub const NONE_TAG: &str = "<none>";

/// One sentence turned into model inputs and rule-derived targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub words: Vec<usize>,
    /// One gold index for intent, one per token for slot. Empty when
    /// unlabeled.
    pub gold: Vec<usize>,
    /// Tag-table rows: a single row for intent, one per token for slot.
    pub tags: Vec<Vec<usize>>,
    /// Match indicators, `[1 × K]` for intent, `[n × L]` for slot.
    pub z: Matrix,
    /// Attention targets, `[K × n]` for intent, `[n × n]` for slot.
    pub t_pos: Matrix,
    pub t_neg: Matrix,
}

/// Builds [`Example`]s from sentences with a fixed rule set, vocabulary and
/// label inventory.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub task: Task,
    rules: CompiledRuleSet,
    labels: Vec<String>,
    label_index: BTreeMap<String, usize>,
    tags: Vec<String>,
    tag_index: BTreeMap<String, usize>,
}

impl Featurizer {
    /// For intent, negative rules are derived from the positive ones over
    /// `labels`. For slot, `labels` are the BIO labels, `O` included.
    pub fn new(task: Task, rules: &CompiledRuleSet, labels: Vec<String>) -> Self {
        let (rules, rule_tags) = match task {
            Task::Intent => (rules.derive_negatives(&labels), rules.intent_tags()),
            Task::Slot => (rules.clone(), rules.slot_bio_tags()),
        };
        let mut tags = vec![NONE_TAG.to_string()];
        tags.extend(rule_tags);
        let index = |v: &[String]| v.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self {
            task,
            label_index: index(&labels),
            tag_index: index(&tags),
            rules,
            labels,
            tags,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.label_index.get(label).copied()
    }

    /// Tag table rows, NONE first.
    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn rules(&self) -> &CompiledRuleSet {
        &self.rules
    }

    fn tag_id(&self, tag: &str) -> Result<usize> {
        self.tag_index
            .get(tag)
            .copied()
            .ok_or_else(|| Error::UnknownTag(tag.to_string()))
    }

    fn gold(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        let lookup = |l: &str| {
            self.label_id(l).ok_or_else(|| {
                Error::InvalidArgument(format!("label `{l}` of sentence {} is not in the label set", sentence.id))
            })
        };
        match self.task {
            Task::Intent => Ok(vec![lookup(&sentence.intent)?]),
            Task::Slot => sentence.slots.iter().map(|l| lookup(l)).collect(),
        }
    }

    pub fn featurize(&self, sentence: &Sentence, vocab: &Vocab) -> Result<Example> {
        let n = sentence.tokens.len();
        if n == 0 {
            return Err(Error::InvalidArgument(format!("sentence {} is empty", sentence.id)));
        }
        let words = sentence.tokens.iter().map(|w| vocab.id(w)).collect();
        let gold = self.gold(sentence)?;
        match self.task {
            Task::Intent => self.intent_example(sentence, words, gold),
            Task::Slot => self.slot_example(sentence, words, gold),
        }
    }

    pub fn featurize_all(&self, sentences: &[Sentence], vocab: &Vocab) -> Result<Vec<Example>> {
        sentences.iter().map(|s| self.featurize(s, vocab)).collect()
    }

    fn intent_example(&self, s: &Sentence, words: Vec<usize>, gold: Vec<usize>) -> Result<Example> {
        let n = s.tokens.len();
        let k = self.labels.len();
        let tags: BTreeSet<String> = self
            .rules
            .annotate_intent(&s.tokens)
            .into_iter()
            .filter(|(_, p)| *p == Polarity::Positive)
            .map(|(t, _)| t)
            .collect();
        let tag_row = tags.iter().map(|t| self.tag_id(t)).collect::<Result<Vec<_>>>()?;
        let z = self
            .rules
            .label_indicators(&s.tokens, &self.labels, Granularity::Sentence)
            .remove(0);
        let rows = |p| {
            let rows = self.rules.clue_mask(&s.tokens, &self.labels, p);
            Matrix::from_vec(k, n, rows.concat())
        };
        Ok(Example {
            words,
            gold,
            tags: vec![tag_row],
            z: Matrix::from_vec(1, k, z),
            t_pos: rows(Polarity::Positive),
            t_neg: rows(Polarity::Negative),
        })
    }

    fn slot_example(&self, s: &Sentence, words: Vec<usize>, gold: Vec<usize>) -> Result<Example> {
        let n = s.tokens.len();
        let tags = self
            .rules
            .annotate_slots(&s.tokens)
            .iter()
            .map(|row| row.iter().map(|t| self.tag_id(t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let z = self
            .rules
            .label_indicators(&s.tokens, &self.labels, Granularity::Token);
        let (t_pos, t_neg) = self.slot_targets(s);
        Ok(Example {
            words,
            gold,
            tags,
            z: Matrix::from_vec(n, self.labels.len(), z.concat()),
            t_pos,
            t_neg,
        })
    }

    /// Row `i` spreads `1/l` over the clue tokens of positive rule hits
    /// covering token `i` whose tag there leads to the gold label (positive
    /// target) or to some other label (negative target). A hit without clue
    /// groups uses its own tokens as clues.
    fn slot_targets(&self, s: &Sentence) -> (Matrix, Matrix) {
        let n = s.tokens.len();
        let text = TokenizedText::new(&s.tokens);
        let mut pos = vec![BTreeSet::new(); n];
        let mut neg = vec![BTreeSet::new(); n];
        for hit in self.rules.slot_hits(&text) {
            if hit.polarity != Polarity::Positive {
                continue;
            }
            let spec = &self.rules.rules()[hit.rule].spec;
            let clues: BTreeSet<usize> = if hit.clue_tokens.is_empty() {
                hit.tokens.clone().collect()
            } else {
                hit.clue_tokens.clone()
            };
            for i in hit.tokens.clone() {
                let prefix = if i == hit.tokens.start { "B" } else { "I" };
                let leads_to_gold = spec
                    .targets_for(&hit.tag)
                    .iter()
                    .any(|t| format!("{prefix}-{t}") == s.slots[i]);
                let side = if leads_to_gold { &mut pos[i] } else { &mut neg[i] };
                side.extend(clues.iter().copied());
            }
        }
        let to_matrix = |marks: Vec<BTreeSet<usize>>| {
            let mut m = Matrix::zeros(n, n);
            for (i, set) in marks.into_iter().enumerate() {
                let w = 1.0 / set.len().max(1) as f64;
                for j in set {
                    m.set(i, j, w);
                }
            }
            m
        };
        (to_matrix(pos), to_matrix(neg))
    }
}
