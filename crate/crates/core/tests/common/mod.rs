//! Shared fixtures and direct-formula oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rulenet::models::{build_model, Example, Model, ModelConfig, ModelShape, Task, Variant};
use rulenet::nn::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `uᵀ M v` with `M` given row-major as `[u.len() × v.len()]`.
fn bilinear(u: &[f64], m: &Matrix, v: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, &ua) in u.iter().enumerate() {
        for (b, &vb) in v.iter().enumerate() {
            total += ua * m.get(a, b) * vb;
        }
    }
    total
}

fn weighted_sum(alpha: &[f64], h: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; h.cols()];
    for (i, &a) in alpha.iter().enumerate() {
        for (d, x) in s.iter_mut().enumerate() {
            *x += a * h.get(i, d);
        }
    }
    s
}

/// Base intent head, evaluated one scalar at a time.
pub fn intent_base_oracle(h: &Matrix, w: &Matrix, c: &Matrix, cls_w: &Matrix, cls_b: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let c: Vec<f64> = (0..c.rows()).map(|r| c.get(r, 0)).collect();
    let scores: Vec<f64> = (0..h.rows()).map(|i| bilinear(h.row(i), w, &c)).collect();
    let alpha = softmax(&scores);
    let s = weighted_sum(&alpha, h);
    let logits = (0..cls_w.cols())
        .map(|k| (0..s.len()).map(|d| s[d] * cls_w.get(d, k)).sum::<f64>() + cls_b.get(0, k))
        .collect();
    (logits, alpha)
}

pub struct TwoSideIntentOracle {
    pub logits: Vec<f64>,
    pub alpha_pos: Vec<Vec<f64>>,
    pub alpha_neg: Vec<Vec<f64>>,
}

/// Two-side intent head: per-label attention with shared `W_a`, per-label
/// output vectors, positive minus negative.
#[allow(clippy::too_many_arguments)]
pub fn intent_two_oracle(
    h: &Matrix,
    wa: &Matrix,
    ctx_pos: &Matrix,
    ctx_neg: &Matrix,
    w_pos: &Matrix,
    b_pos: &Matrix,
    w_neg: &Matrix,
    b_neg: &Matrix,
) -> TwoSideIntentOracle {
    let k = ctx_pos.rows();
    let side = |ctx: &Matrix, w: &Matrix, b: &Matrix| {
        let mut logits = Vec::new();
        let mut alphas = Vec::new();
        for label in 0..k {
            let scores: Vec<f64> = (0..h.rows()).map(|i| bilinear(h.row(i), wa, ctx.row(label))).collect();
            let alpha = softmax(&scores);
            let s = weighted_sum(&alpha, h);
            logits.push(dot(w.row(label), &s) + b.get(0, label));
            alphas.push(alpha);
        }
        (logits, alphas)
    };
    let (lp, alpha_pos) = side(ctx_pos, w_pos, b_pos);
    let (ln, alpha_neg) = side(ctx_neg, w_neg, b_neg);
    TwoSideIntentOracle {
        logits: lp.iter().zip(&ln).map(|(p, n)| p - n).collect(),
        alpha_pos,
        alpha_neg,
    }
}

/// Two-side slot head: `α_ij ∝ exp(h_jᵀ W h_i)`, classifier over `[s_i; h_i]`.
#[allow(clippy::too_many_arguments)]
pub fn slot_two_oracle(
    h: &Matrix,
    w_sp: &Matrix,
    w_sn: &Matrix,
    w_p: &Matrix,
    b_p: &Matrix,
    w_n: &Matrix,
    b_n: &Matrix,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = h.rows();
    let labels = w_p.cols();
    let side = |w_s: &Matrix, w: &Matrix, b: &Matrix| {
        let mut logits = Vec::new();
        let mut alphas = Vec::new();
        for i in 0..n {
            let scores: Vec<f64> = (0..n).map(|j| bilinear(h.row(j), w_s, h.row(i))).collect();
            let alpha = softmax(&scores);
            let mut input = weighted_sum(&alpha, h);
            input.extend_from_slice(h.row(i));
            logits.push(
                (0..labels)
                    .map(|l| (0..input.len()).map(|d| input[d] * w.get(d, l)).sum::<f64>() + b.get(0, l))
                    .collect::<Vec<f64>>(),
            );
            alphas.push(alpha);
        }
        (logits, alphas)
    };
    let (lp, ap) = side(w_sp, w_p, b_p);
    let (ln, an) = side(w_sn, w_n, b_n);
    let logits = lp
        .iter()
        .zip(&ln)
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| a - b).collect())
        .collect();
    (logits, ap, an)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

pub const TINY_VOCAB: usize = 7;
pub const TINY_TAGS: usize = 4;
pub const TINY_LABELS: usize = 3;

pub fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        hidden: 3,
        tag_dim: 2,
        dropout: 0.0,
        beta_p: 0.7,
        beta_n: 0.4,
        fuse_init: 0.5,
        freeze_fuse: false,
        seed,
    }
}

pub fn tiny_model(variant: Variant, task: Task, config: ModelConfig) -> Model {
    let mut r = rng(config.seed ^ 0x5eed);
    let shape = ModelShape {
        embeddings: rand_matrix(TINY_VOCAB, 4, &mut r),
        num_labels: TINY_LABELS,
        num_tags: TINY_TAGS,
    };
    build_model(variant, task, config, shape).expect("valid tiny model")
}

/// A 4-token, 3-label instance with non-trivial tags, indicators and
/// attention targets.
pub fn tiny_example(task: Task) -> Example {
    let words = vec![1, 4, 2, 6];
    match task {
        Task::Intent => Example {
            words,
            gold: vec![2],
            tags: vec![vec![1, 3]],
            z: Matrix::from_rows(&[vec![0.0, 1.0, 1.0]]),
            t_pos: Matrix::from_rows(&[
                vec![0.0; 4],
                vec![0.5, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ]),
            t_neg: Matrix::from_rows(&[
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0; 4],
                vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0],
            ]),
        },
        Task::Slot => Example {
            words,
            gold: vec![0, 1, 2, 0],
            tags: vec![vec![], vec![1], vec![2, 3], vec![]],
            z: Matrix::from_rows(&[
                vec![0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, 0.0],
            ]),
            t_pos: Matrix::from_rows(&[
                vec![0.0; 4],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.5, 0.0],
                vec![0.0; 4],
            ]),
            t_neg: Matrix::from_rows(&[
                vec![0.0; 4],
                vec![0.0; 4],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.5, 0.0, 0.0, 0.5],
            ]),
        },
    }
}

// ---------------------------------------------------------------------------
// Rule engine brute force

use rand::seq::SliceRandom;
use regex::{Regex, RegexBuilder};
use rulenet::rules::{CompiledRuleSet, MacroTable, Polarity, RuleSpec, Scope};
use std::collections::{BTreeMap, BTreeSet};

pub const ORACLE_WORDS: [&str; 20] = [
    "list", "show", "the", "flights", "flight", "from", "to", "boston", "miami", "denver",
    "delta", "united", "fare", "cheap", "on", "monday", "me", "a", "which", "airline",
];

const ORACLE_PHRASES: [&str; 10] = [
    "list the delta",
    "list united",
    "flights from",
    "from boston to miami",
    "from denver to boston",
    "on monday",
    "which airline",
    "show me",
    "cheap fare",
    "a flight",
];

pub fn oracle_macros() -> MacroTable {
    MacroTable::new(BTreeMap::from([
        ("__CITY".to_string(), vec!["boston".into(), "miami".into(), "denver".into()]),
        ("__AIRLINE".to_string(), vec!["delta".into(), "united".into()]),
    ]))
    .unwrap()
}

pub fn oracle_rules() -> Vec<RuleSpec> {
    let r = |id: &str, pattern: &str, retag: &str| RuleSpec {
        id: id.into(),
        scope: Scope::Intent,
        pattern: pattern.into(),
        retag: retag.into(),
        polarity: Polarity::Positive,
        group_tags: vec![],
        clue_groups: vec![],
        target_labels: vec![],
    };
    vec![
        r("airline_list", r"list(\sthe)?\s__AIRLINE", "airline"),
        r("flight_start", r"^flights?\sfrom", "flight"),
        r("fare", r"(fare|cheap)", "airfare"),
        r("from_to", r"from\s(__CITY)\sto\s(__CITY)", "flight"),
        r("lazy_day", r"(\w+\s){1,2}?on\smonday", "flight"),
        r("which_end", r"which\s(?:airline|flight)$", "airline"),
        r("class", r"[a-c]\w*\sme", "show"),
        r("show_only", r"^show(\sme)?$", "show"),
    ]
}

/// Short sentences: half uniform over the 20 words, half stitched from rule
/// fragments so that rules actually fire.
pub fn oracle_sentences(count: usize, seed: u64) -> Vec<Vec<String>> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let mut tokens: Vec<String> = Vec::new();
            let len = r.gen_range(1..=6);
            if i % 2 == 0 {
                while tokens.len() < len {
                    tokens.push(ORACLE_WORDS.choose(&mut r).unwrap().to_string());
                }
            } else {
                while tokens.len() < len {
                    let phrase = ORACLE_PHRASES.choose(&mut r).unwrap();
                    tokens.extend(phrase.split(' ').map(String::from));
                }
                tokens.truncate(len);
            }
            tokens
        })
        .collect()
}

fn oracle_expand(pattern: &str, macros: &MacroTable) -> String {
    let mut out = pattern.to_string();
    for (name, words) in macros.iter() {
        let alt: Vec<String> = words.iter().map(|w| regex::escape(w)).collect();
        out = out.replace(name.as_str(), &format!("(?:{})", alt.join("|")));
    }
    out
}

struct FullMatcher {
    regex: Regex,
    at_start: bool,
    at_end: bool,
}

fn full_matcher(pattern: &str) -> FullMatcher {
    let at_start = pattern.starts_with('^');
    let at_end = pattern.ends_with('$') && !pattern.ends_with("\\$");
    let core = &pattern[usize::from(at_start)..pattern.len() - usize::from(at_end)];
    FullMatcher {
        regex: RegexBuilder::new(&format!("^(?:{core})$"))
            .case_insensitive(true)
            .build()
            .unwrap(),
        at_start,
        at_end,
    }
}

/// Whether any substring of the joined sentence fully matches the rule.
pub fn brute_force_matches(spec: &RuleSpec, macros: &MacroTable, tokens: &[String]) -> bool {
    let joined = tokens.join(" ");
    let n = joined.len();
    let m = full_matcher(&oracle_expand(&spec.pattern, macros));
    (0..=n).any(|s| {
        (s..=n).any(|e| {
            (!m.at_start || s == 0) && (!m.at_end || e == n) && m.regex.is_match(&joined[s..e])
        })
    })
}

/// Capture groups the rule author wrote, macros excluded.
pub fn oracle_group_count(spec: &RuleSpec, macros: &MacroTable) -> usize {
    Regex::new(&oracle_expand(&spec.pattern, macros)).unwrap().captures_len() - 1
}

/// Tries every substring of the joined sentence against every rule.
pub fn brute_force_intent(
    specs: &[RuleSpec],
    macros: &MacroTable,
    tokens: &[String],
) -> BTreeSet<(String, Polarity)> {
    specs
        .iter()
        .filter(|s| s.scope == Scope::Intent && brute_force_matches(s, macros, tokens))
        .map(|s| (s.retag.clone(), s.polarity))
        .collect()
}

/// `(mismatches, sentences with at least one match)`.
pub fn compare_with_brute_force(count: usize, seed: u64) -> (usize, usize) {
    let macros = oracle_macros();
    let specs = oracle_rules();
    let rs = CompiledRuleSet::compile(specs.clone(), macros.clone()).unwrap();
    let mut mismatches = 0;
    let mut fired = 0;
    for tokens in oracle_sentences(count, seed) {
        let got = rs.annotate_intent(&tokens);
        let want = brute_force_intent(&specs, &macros, &tokens);
        if got != want {
            mismatches += 1;
        }
        if !want.is_empty() {
            fired += 1;
        }
    }
    (mismatches, fired)
}

// ---------------------------------------------------------------------------
// Split properties

use rulenet::corpus::{few_shot_split_intent, few_shot_split_slot, slot_mentions, Dataset};

fn ids(ds: &Dataset) -> BTreeSet<usize> {
    ds.sentences.iter().map(|s| s.id).collect()
}

fn mention_totals(ds: &Dataset) -> BTreeMap<String, usize> {
    let mut totals = BTreeMap::new();
    for s in &ds.sentences {
        for (ty, c) in slot_mentions(&s.slots) {
            *totals.entry(ty).or_insert(0) += c;
        }
    }
    totals
}

/// Nesting, determinism and coverage of both splitters for one seed.
pub fn check_split_properties(ds: &Dataset, seed: u64, ks: &[usize]) -> Result<(), String> {
    let available = mention_totals(ds);
    let mut prev_intent: Option<BTreeSet<usize>> = None;
    let mut prev_slot: Option<BTreeSet<usize>> = None;
    for &k in ks {
        let a = few_shot_split_intent(ds, k, seed).map_err(|e| e.to_string())?;
        let b = few_shot_split_intent(ds, k, seed).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("intent split not deterministic (seed {seed}, k {k})"));
        }
        for (label, total) in ds.intent_counts() {
            let got = a.sentences.iter().filter(|s| s.intent == label).count();
            if got != total.min(k) {
                return Err(format!("intent {label}: {got} selected, want {}", total.min(k)));
            }
        }
        let sa = few_shot_split_slot(ds, k, seed).map_err(|e| e.to_string())?;
        let sb = few_shot_split_slot(ds, k, seed).map_err(|e| e.to_string())?;
        if sa != sb {
            return Err(format!("slot split not deterministic (seed {seed}, k {k})"));
        }
        let got = mention_totals(&sa);
        for (ty, &avail) in &available {
            let have = got.get(ty).copied().unwrap_or(0);
            if have < avail.min(k) {
                return Err(format!("slot {ty}: {have} mentions, want at least {}", avail.min(k)));
            }
        }
        let (ia, is) = (ids(&a), ids(&sa));
        if let Some(p) = &prev_intent {
            if !p.is_subset(&ia) {
                return Err(format!("intent {k}-shot does not contain the smaller split (seed {seed})"));
            }
        }
        if let Some(p) = &prev_slot {
            if !p.is_subset(&is) {
                return Err(format!("slot {k}-shot does not contain the smaller split (seed {seed})"));
            }
        }
        prev_intent = Some(ia);
        prev_slot = Some(is);
    }
    Ok(())
}
