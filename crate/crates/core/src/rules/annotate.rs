use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use regex::Captures;
use serde::{Deserialize, Serialize};

use super::{CompiledRuleSet, Polarity, Scope};

/// Tokens together with their byte spans in the single-space-joined string.
#[derive(Debug, Clone)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
    pub joined: String,
    pub spans: Vec<Range<usize>>,
}

impl TokenizedText {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut joined = String::new();
        let mut spans = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if i > 0 {
                joined.push(' ');
            }
            let start = joined.len();
            joined.push_str(tok.as_ref());
            spans.push(start..joined.len());
        }
        Self {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            joined,
            spans,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Indices of tokens lying entirely inside the byte range.
    pub fn covered(&self, range: Range<usize>) -> Range<usize> {
        let mut first = None;
        let mut last = 0;
        for (i, span) in self.spans.iter().enumerate() {
            if span.start >= range.start && span.end <= range.end && span.start < span.end {
                first.get_or_insert(i);
                last = i + 1;
            }
        }
        match first {
            Some(f) => f..last,
            None => 0..0,
        }
    }
}

/// One intent rule that fired on a sentence. Clue tokens are unioned over
/// all of the rule's matches.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentHit {
    pub rule: usize,
    pub retag: String,
    pub polarity: Polarity,
    pub clue_tokens: BTreeSet<usize>,
}

/// One tagged capture group of one match of a slot rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotHit {
    pub rule: usize,
    pub polarity: Polarity,
    pub tag: String,
    pub tokens: Range<usize>,
    pub clue_tokens: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Token,
}

/// Everything the rules say about one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAnnotation {
    pub intent_tags: BTreeSet<(String, Polarity)>,
    pub slot_tags: Vec<Vec<String>>,
    /// `[label][token]`, positive rules.
    pub clue_mask: Vec<Vec<f64>>,
    /// Sentence-level indicators over the supplied intent labels.
    pub indicators: Vec<f64>,
}

impl CompiledRuleSet {
    fn clue_tokens(&self, text: &TokenizedText, caps: &Captures<'_>, groups: &[usize]) -> BTreeSet<usize> {
        groups
            .iter()
            .filter_map(|&g| caps.get(g))
            .flat_map(|m| text.covered(m.range()))
            .collect()
    }

    pub fn intent_hits(&self, text: &TokenizedText) -> Vec<IntentHit> {
        if text.is_empty() {
            return Vec::new();
        }
        let mut hits = Vec::new();
        for (idx, rule) in self.rules.iter().enumerate() {
            if rule.spec.scope != Scope::Intent {
                continue;
            }
            let mut fired = false;
            let mut clue_tokens = BTreeSet::new();
            for caps in rule.regex().captures_iter(&text.joined) {
                fired = true;
                clue_tokens.extend(self.clue_tokens(text, &caps, &rule.spec.clue_groups));
            }
            if fired {
                hits.push(IntentHit {
                    rule: idx,
                    retag: rule.spec.retag.clone(),
                    polarity: rule.spec.polarity,
                    clue_tokens,
                });
            }
        }
        hits
    }

    pub fn slot_hits(&self, text: &TokenizedText) -> Vec<SlotHit> {
        if text.is_empty() {
            return Vec::new();
        }
        let mut hits = Vec::new();
        for (idx, rule) in self.rules.iter().enumerate() {
            if rule.spec.scope != Scope::Slot {
                continue;
            }
            for caps in rule.regex().captures_iter(&text.joined) {
                let clue_tokens = self.clue_tokens(text, &caps, &rule.spec.clue_groups);
                for (group, tag) in &rule.spec.group_tags {
                    let Some(m) = caps.get(*group) else { continue };
                    let tokens = text.covered(m.range());
                    if tokens.is_empty() {
                        continue;
                    }
                    hits.push(SlotHit {
                        rule: idx,
                        polarity: rule.spec.polarity,
                        tag: tag.clone(),
                        tokens,
                        clue_tokens: clue_tokens.clone(),
                    });
                }
            }
        }
        hits
    }

    /// Retags of every matching intent rule, duplicates collapsed.
    pub fn annotate_intent<S: AsRef<str>>(&self, tokens: &[S]) -> BTreeSet<(String, Polarity)> {
        self.intent_hits(&TokenizedText::new(tokens))
            .into_iter()
            .map(|h| (h.retag, h.polarity))
            .collect()
    }

    /// Per-token BIO tags from positive slot rules. A token may carry tags
    /// from several rules.
    pub fn annotate_slots<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Vec<String>> {
        let text = TokenizedText::new(tokens);
        let mut tags = vec![Vec::new(); text.len()];
        for hit in self.slot_hits(&text) {
            if hit.polarity != Polarity::Positive {
                continue;
            }
            for i in hit.tokens.clone() {
                let prefix = if i == hit.tokens.start { "B" } else { "I" };
                tags[i].push(format!("{prefix}-{}", hit.tag));
            }
        }
        tags
    }

    /// Attention target `t[k][i]`: `1/l_k` on each of the `l_k` distinct clue
    /// tokens marked by matched rules of the given polarity that lead to
    /// label `k`, zero elsewhere.
    pub fn clue_mask<S: AsRef<str>>(
        &self,
        tokens: &[S],
        labels: &[String],
        polarity: Polarity,
    ) -> Vec<Vec<f64>> {
        let text = TokenizedText::new(tokens);
        let hits = self.intent_hits(&text);
        clue_rows(self, &hits, labels, polarity, text.len())
    }

    /// 0/1 indicators of whether some matched positive rule leads to each
    /// target label. Sentence granularity yields one row; token granularity
    /// one row per token, over BIO slot labels.
    pub fn label_indicators<S: AsRef<str>>(
        &self,
        tokens: &[S],
        target_labels: &[String],
        granularity: Granularity,
    ) -> Vec<Vec<f64>> {
        let text = TokenizedText::new(tokens);
        let index: BTreeMap<&str, usize> = target_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        match granularity {
            Granularity::Sentence => {
                let mut z = vec![0.0; target_labels.len()];
                for hit in self.intent_hits(&text) {
                    if hit.polarity != Polarity::Positive {
                        continue;
                    }
                    let spec = &self.rules[hit.rule].spec;
                    for target in spec.targets_for(&spec.retag) {
                        if let Some(&k) = index.get(target) {
                            z[k] = 1.0;
                        }
                    }
                }
                vec![z]
            }
            Granularity::Token => {
                let mut z = vec![vec![0.0; target_labels.len()]; text.len()];
                for hit in self.slot_hits(&text) {
                    if hit.polarity != Polarity::Positive {
                        continue;
                    }
                    let spec = &self.rules[hit.rule].spec;
                    for i in hit.tokens.clone() {
                        let prefix = if i == hit.tokens.start { "B" } else { "I" };
                        for target in spec.targets_for(&hit.tag) {
                            if let Some(&k) = index.get(format!("{prefix}-{target}").as_str()) {
                                z[i][k] = 1.0;
                            }
                        }
                    }
                }
                z
            }
        }
    }

    /// Intent tags, slot tags, positive clue mask and sentence indicators in
    /// one pass.
    pub fn annotate<S: AsRef<str>>(&self, tokens: &[S], intent_labels: &[String]) -> MatchAnnotation {
        let text = TokenizedText::new(tokens);
        let hits = self.intent_hits(&text);
        MatchAnnotation {
            intent_tags: hits.iter().map(|h| (h.retag.clone(), h.polarity)).collect(),
            slot_tags: self.annotate_slots(tokens),
            clue_mask: clue_rows(self, &hits, intent_labels, Polarity::Positive, text.len()),
            indicators: self
                .label_indicators(tokens, intent_labels, Granularity::Sentence)
                .remove(0),
        }
    }
}

fn clue_rows(
    rs: &CompiledRuleSet,
    hits: &[IntentHit],
    labels: &[String],
    polarity: Polarity,
    n: usize,
) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|label| {
            let mut marked = BTreeSet::new();
            for hit in hits.iter().filter(|h| h.polarity == polarity) {
                let spec = &rs.rules[hit.rule].spec;
                if spec.targets_for(&spec.retag).contains(&label.as_str()) {
                    marked.extend(hit.clue_tokens.iter().copied());
                }
            }
            let mut row = vec![0.0; n];
            if !marked.is_empty() {
                let weight = 1.0 / marked.len() as f64;
                for i in marked {
                    row[i] = weight;
                }
            }
            row
        })
        .collect()
}
