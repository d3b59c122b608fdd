//! Annotated regular-expression rules.
//!
//! A rule file holds one JSON object per line. Intent rules emit their
//! `retag` for the whole sentence; slot rules emit BIO tags for the tokens
//! covered by their tagged capture groups. Both kinds may mark clue groups,
//! whose tokens become attention targets during training.
//!
//! Patterns are matched case-insensitively against the single-space-joined
//! token sequence. `__NAME` references are expanded from a [`MacroTable`]
//! before compilation.

mod annotate;
mod macros;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotate::{
    Granularity, IntentHit, MatchAnnotation, SlotHit, TokenizedText,
};
pub use macros::{expand_macros, MacroTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Intent,
    Slot,
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

/// One line of a rule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub id: String,
    pub scope: Scope,
    pub pattern: String,
    pub retag: String,
    #[serde(default)]
    pub polarity: Polarity,
    /// `(group_index, tag)`, group indices are 1-based.
    #[serde(default)]
    pub group_tags: Vec<(usize, String)>,
    #[serde(default)]
    pub clue_groups: Vec<usize>,
    /// Target labels a simplified tag stands for (`city` -> `fromloc.city`, ...).
    #[serde(default)]
    pub target_labels: Vec<String>,
}

impl RuleSpec {
    /// Labels this rule leads to: `target_labels` when given, otherwise the
    /// tag itself.
    pub fn targets_for<'a>(&'a self, tag: &'a str) -> Vec<&'a str> {
        if self.target_labels.is_empty() {
            vec![tag]
        } else {
            self.target_labels.iter().map(String::as_str).collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub spec: RuleSpec,
    pub expanded: String,
    pub group_count: usize,
    regex: Arc<Regex>,
}

impl CompiledRule {
    pub fn regex(&self) -> &Regex {
        &self.regex
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStats {
    pub group_count: usize,
    pub or_clause_count: usize,
}

/// The macro-expanded, compiled rule set. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct CompiledRuleSet {
    rules: Vec<CompiledRule>,
    macros: MacroTable,
}

pub fn parse_rule_lines(text: &str, origin: &Path) -> Result<Vec<RuleSpec>> {
    let mut specs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let spec: RuleSpec = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        specs.push(spec);
    }
    Ok(specs)
}

pub fn load_rule_specs(path: impl AsRef<Path>) -> Result<Vec<RuleSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rule_lines(&text, path)
}

/// Loads and compiles a rule file against a macro file.
pub fn compile_ruleset(
    rule_file: impl AsRef<Path>,
    macro_file: impl AsRef<Path>,
) -> Result<CompiledRuleSet> {
    let specs = load_rule_specs(rule_file)?;
    let macros = MacroTable::load(macro_file)?;
    CompiledRuleSet::compile(specs, macros)
}

impl CompiledRuleSet {
    pub fn compile(specs: Vec<RuleSpec>, macros: MacroTable) -> Result<Self> {
        let rules = specs
            .into_iter()
            .map(|spec| compile_rule(spec, &macros))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rules, macros })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    pub fn macros(&self) -> &MacroTable {
        &self.macros
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Merges two rule sets. Macro tables must agree on shared names.
    pub fn merge(mut self, other: CompiledRuleSet) -> Result<Self> {
        let mut merged = self.macros.iter().map(|(k, v)| (k.clone(), v.clone())).collect::<std::collections::BTreeMap<_, _>>();
        for (name, words) in other.macros.iter() {
            if let Some(existing) = merged.get(name) {
                if existing != words {
                    return Err(Error::Macro(format!("conflicting definitions of `{name}`")));
                }
            }
            merged.insert(name.clone(), words.clone());
        }
        self.macros = MacroTable::new(merged)?;
        self.rules.extend(other.rules);
        Ok(self)
    }

    /// Registers every positive intent rule of label `j` as a negative rule
    /// for each other label `k` in `label_set`.
    pub fn derive_negatives(&self, label_set: &[String]) -> CompiledRuleSet {
        let mut rules = self.rules.clone();
        for label in label_set {
            for rule in &self.rules {
                let spec = &rule.spec;
                if spec.scope != Scope::Intent || spec.polarity != Polarity::Positive {
                    continue;
                }
                if spec.targets_for(&spec.retag).contains(&label.as_str()) {
                    continue;
                }
                let mut negative = rule.clone();
                negative.spec.id = format!("{}~neg~{}", spec.id, label);
                negative.spec.retag = label.clone();
                negative.spec.polarity = Polarity::Negative;
                negative.spec.target_labels.clear();
                rules.push(negative);
            }
        }
        CompiledRuleSet {
            rules,
            macros: self.macros.clone(),
        }
    }

    pub fn rule_stats(&self) -> Vec<(String, RuleStats)> {
        self.rules
            .iter()
            .map(|r| {
                (
                    r.spec.id.clone(),
                    RuleStats {
                        group_count: r.group_count,
                        or_clause_count: count_or_clauses(&r.spec.pattern),
                    },
                )
            })
            .collect()
    }

    /// Rules of one scope and polarity, in file order.
    pub fn select(
        &self,
        scope: Scope,
        polarity: Polarity,
    ) -> impl Iterator<Item = (usize, &CompiledRule)> + '_ {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.spec.scope == scope && r.spec.polarity == polarity)
    }

    /// Distinct positive intent tags, sorted.
    pub fn intent_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self
            .select(Scope::Intent, Polarity::Positive)
            .map(|(_, r)| r.spec.retag.clone())
            .collect();
        tags.sort();
        tags.dedup();
        tags
    }

    /// Distinct BIO slot tags the positive slot rules can emit, sorted.
    pub fn slot_bio_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self
            .select(Scope::Slot, Polarity::Positive)
            .flat_map(|(_, r)| r.spec.group_tags.iter())
            .flat_map(|(_, tag)| [format!("B-{tag}"), format!("I-{tag}")])
            .collect();
        tags.sort();
        tags.dedup();
        tags
    }
}

fn compile_rule(spec: RuleSpec, macros: &MacroTable) -> Result<CompiledRule> {
    let rule_err = |message: String| Error::Rule {
        rule: spec.id.clone(),
        message,
    };
    if spec.retag.trim().is_empty() {
        return Err(rule_err("retag must be non-empty".into()));
    }
    let expanded = expand_macros(&spec.pattern, macros).map_err(|e| match e {
        Error::UndefinedMacro(name) => rule_err(format!("undefined macro `{name}`")),
        other => other,
    })?;
    let regex = RegexBuilder::new(&expanded)
        .case_insensitive(true)
        .build()
        .map_err(|e| rule_err(format!("unparseable pattern: {e}")))?;
    let group_count = regex.captures_len() - 1;

    for (idx, _) in &spec.group_tags {
        if *idx == 0 || *idx > group_count {
            return Err(rule_err(format!(
                "group_tags references group {idx} but the pattern has {group_count} group(s)"
            )));
        }
    }
    for idx in &spec.clue_groups {
        if *idx == 0 || *idx > group_count {
            return Err(rule_err(format!(
                "clue_groups references group {idx} but the pattern has {group_count} group(s)"
            )));
        }
    }
    if spec.scope == Scope::Slot && spec.group_tags.is_empty() {
        log::warn!(
            "slot rule `{}` has no group_tags; it contributes no slot tags",
            spec.id
        );
    }

    Ok(CompiledRule {
        spec,
        expanded,
        group_count,
        regex: Arc::new(regex),
    })
}

/// Counts unescaped `|` operators outside character classes.
fn count_or_clauses(pattern: &str) -> usize {
    let mut count = 0;
    let mut escaped = false;
    let mut in_class = false;
    for c in pattern.chars() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '[' if !in_class => in_class = true,
            ']' if in_class => in_class = false,
            '|' if !in_class => count += 1,
            _ => {}
        }
    }
    count
}
