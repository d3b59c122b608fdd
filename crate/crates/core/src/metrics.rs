//! Accuracy, macro/micro F1 and evaluation of rule output used directly as
//! predictions (REO).
//!
//! Precision and recall with an empty denominator are 0. Macro scores average
//! per-label precision and recall first and take the harmonic mean of the
//! averages.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{slot_type, Sentence};
use crate::error::{Error, Result};
use crate::models::Task;
use crate::rules::{CompiledRuleSet, Polarity, TokenizedText};

/// Prediction used by REO when no intent rule fires. Never a gold label.
pub const ABSTAIN: &str = "<abstain>";
pub const OUTSIDE: &str = "O";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    /// Intent only.
    pub accuracy: Option<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Slot only.
    pub micro_f1: Option<f64>,
    /// Slot only, when span scoring was requested.
    pub span_f1: Option<f64>,
    pub per_label: Vec<LabelScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_lengths(pred: usize, gold: usize) -> Result<()> {
    if pred != gold {
        return Err(Error::InvalidArgument(format!(
            "{pred} predictions for {gold} gold labels"
        )));
    }
    Ok(())
}

pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    if gold.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let correct = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref() == g.as_ref())
        .count();
    Ok(ratio(correct, gold.len()))
}

pub fn per_label_scores<S: AsRef<str>, T: AsRef<str>>(
    pred: &[S],
    gold: &[T],
    labels: &[String],
) -> Result<Vec<LabelScore>> {
    check_lengths(pred.len(), gold.len())?;
    Ok(labels
        .iter()
        .map(|label| {
            let (mut tp, mut predicted, mut actual) = (0, 0, 0);
            for (p, g) in pred.iter().zip(gold) {
                let (p, g) = (p.as_ref() == label, g.as_ref() == label);
                tp += usize::from(p && g);
                predicted += usize::from(p);
                actual += usize::from(g);
            }
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            LabelScore {
                label: label.clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: actual,
            }
        })
        .collect())
}

/// `(macro_precision, macro_recall, macro_f1)` from per-label scores.
fn macro_from(scores: &[LabelScore]) -> (f64, f64, f64) {
    let n = scores.len() as f64;
    let p = scores.iter().map(|s| s.precision).sum::<f64>() / n;
    let r = scores.iter().map(|s| s.recall).sum::<f64>() / n;
    (p, r, harmonic(p, r))
}

pub fn macro_f1<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T], labels: &[String]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("macro-F1 needs a non-empty label set".into()));
    }
    Ok(macro_from(&per_label_scores(pred, gold, labels)?).2)
}

/// Token-level counts pooled over `positive` labels.
pub fn micro_f1<S: AsRef<str>, T: AsRef<str>>(pred: &[S], gold: &[T], positive: &[String]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    let positive: BTreeSet<&str> = positive.iter().map(String::as_str).collect();
    let (mut tp, mut predicted, mut actual) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let (p, g) = (p.as_ref(), g.as_ref());
        let p_pos = positive.contains(p);
        let g_pos = positive.contains(g);
        tp += usize::from(p_pos && p == g);
        predicted += usize::from(p_pos);
        actual += usize::from(g_pos);
    }
    Ok(harmonic(ratio(tp, predicted), ratio(tp, actual)))
}

/// `(type, start, end)` spans of a BIO sequence. A stray `I-x` opens a span.
pub fn bio_spans<S: AsRef<str>>(labels: &[S]) -> BTreeSet<(String, usize, usize)> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(String, usize)> = None;
    for (i, label) in labels.iter().enumerate() {
        let label = label.as_ref();
        let continues = match (&open, label.strip_prefix("I-")) {
            (Some((ty, _)), Some(rest)) => ty == rest,
            _ => false,
        };
        if continues {
            continue;
        }
        if let Some((ty, start)) = open.take() {
            spans.insert((ty, start, i));
        }
        if let Some(ty) = slot_type(label) {
            open = Some((ty.to_string(), i));
        }
    }
    if let Some((ty, start)) = open {
        spans.insert((ty, start, labels.len()));
    }
    spans
}

/// Exact-match span F1 over a set of sentences.
pub fn span_f1<S: AsRef<str>, T: AsRef<str>>(pred: &[Vec<S>], gold: &[Vec<T>]) -> Result<f64> {
    check_lengths(pred.len(), gold.len())?;
    let (mut tp, mut predicted, mut actual) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        check_lengths(p.len(), g.len())?;
        let ps = bio_spans(p);
        let gs = bio_spans(g);
        tp += ps.intersection(&gs).count();
        predicted += ps.len();
        actual += gs.len();
    }
    Ok(harmonic(ratio(tp, predicted), ratio(tp, actual)))
}

pub fn evaluate_intent<S: AsRef<str>, T: AsRef<str>>(
    pred: &[S],
    gold: &[T],
    labels: &[String],
) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty intent label set".into()));
    }
    let per_label = per_label_scores(pred, gold, labels)?;
    let (macro_precision, macro_recall, macro_f1) = macro_from(&per_label);
    Ok(EvalReport {
        task: Task::Intent,
        accuracy: Some(accuracy(pred, gold)?),
        macro_precision,
        macro_recall,
        macro_f1,
        micro_f1: None,
        span_f1: None,
        per_label,
    })
}

/// Token-level slot scores. `labels` may include `O`; it is dropped from
/// both the macro label set and the micro pool.
pub fn evaluate_slot<S: AsRef<str>, T: AsRef<str>>(
    pred: &[Vec<S>],
    gold: &[Vec<T>],
    labels: &[String],
    with_spans: bool,
) -> Result<EvalReport> {
    check_lengths(pred.len(), gold.len())?;
    let positive: Vec<String> = labels.iter().filter(|l| *l != OUTSIDE).cloned().collect();
    if positive.is_empty() {
        return Err(Error::InvalidArgument("slot label set has no labels besides O".into()));
    }
    let mut flat_pred = Vec::new();
    let mut flat_gold = Vec::new();
    for (p, g) in pred.iter().zip(gold) {
        check_lengths(p.len(), g.len())?;
        flat_pred.extend(p.iter().map(|s| s.as_ref()));
        flat_gold.extend(g.iter().map(|s| s.as_ref()));
    }
    let per_label = per_label_scores(&flat_pred, &flat_gold, &positive)?;
    let (macro_precision, macro_recall, macro_f1) = macro_from(&per_label);
    Ok(EvalReport {
        task: Task::Slot,
        accuracy: None,
        macro_precision,
        macro_recall,
        macro_f1,
        micro_f1: Some(micro_f1(&flat_pred, &flat_gold, &positive)?),
        span_f1: if with_spans { Some(span_f1(pred, gold)?) } else { None },
        per_label,
    })
}

/// REO intent: the retag of the firing positive rule with the most groups,
/// ties broken by the lexicographically smallest retag.
pub fn reo_intent(rs: &CompiledRuleSet, tokens: &[String]) -> Option<String> {
    rs.intent_hits(&TokenizedText::new(tokens))
        .into_iter()
        .filter(|h| h.polarity == Polarity::Positive)
        .map(|h| (rs.rules()[h.rule].group_count, h.retag))
        .min_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, tag)| tag)
}

/// REO slot: per token, the BIO tag from the covering positive rule with the
/// most groups, ties broken lexicographically; `O` where nothing fired.
pub fn reo_slots(rs: &CompiledRuleSet, tokens: &[String]) -> Vec<String> {
    let text = TokenizedText::new(tokens);
    let mut best: Vec<Option<(usize, String)>> = vec![None; tokens.len()];
    for hit in rs.slot_hits(&text) {
        if hit.polarity != Polarity::Positive {
            continue;
        }
        let groups = rs.rules()[hit.rule].group_count;
        for i in hit.tokens.clone() {
            let prefix = if i == hit.tokens.start { "B" } else { "I" };
            let tag = format!("{prefix}-{}", hit.tag);
            let better = match &best[i] {
                None => true,
                Some((g, t)) => groups > *g || (groups == *g && tag < *t),
            };
            if better {
                best[i] = Some((groups, tag));
            }
        }
    }
    best.into_iter()
        .map(|b| b.map_or_else(|| OUTSIDE.to_string(), |(_, t)| t))
        .collect()
}

/// Scores rule output used directly as predictions.
pub fn evaluate_reo(
    rs: &CompiledRuleSet,
    sentences: &[Sentence],
    task: Task,
    labels: &[String],
) -> Result<EvalReport> {
    match task {
        Task::Intent => {
            let pred: Vec<String> = sentences
                .iter()
                .map(|s| reo_intent(rs, &s.tokens).unwrap_or_else(|| ABSTAIN.to_string()))
                .collect();
            let gold: Vec<&str> = sentences.iter().map(|s| s.intent.as_str()).collect();
            evaluate_intent(&pred, &gold, labels)
        }
        Task::Slot => {
            let pred: Vec<Vec<String>> = sentences.iter().map(|s| reo_slots(rs, &s.tokens)).collect();
            let gold: Vec<Vec<String>> = sentences.iter().map(|s| s.slots.clone()).collect();
            evaluate_slot(&pred, &gold, labels, false)
        }
    }
}
