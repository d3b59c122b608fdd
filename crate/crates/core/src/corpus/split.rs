use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{slot_type, Dataset, SplitTag};
use crate::error::{Error, Result};

const PARTIAL_TOP_INTENTS: usize = 3;
const PARTIAL_TOP_SIZE: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Intent,
    Slot,
    PartialIntent,
}

/// Everything needed to reproduce a split exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub kind: SplitKind,
    pub k: usize,
    pub seed: u64,
    pub selected_sentence_ids: Vec<usize>,
}

impl SplitManifest {
    pub fn from_dataset(kind: SplitKind, k: usize, seed: u64, ds: &Dataset) -> Self {
        Self {
            kind,
            k,
            seed,
            selected_sentence_ids: ds.sentences.iter().map(|s| s.id).collect(),
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

/// One seeded permutation of sentence ids per intent, classes in label order.
fn intent_permutations(ds: &Dataset, seed: u64) -> BTreeMap<String, Vec<usize>> {
    let mut by_intent: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for s in &ds.sentences {
        by_intent.entry(s.intent.clone()).or_default().push(s.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ids in by_intent.values_mut() {
        ids.shuffle(&mut rng);
    }
    by_intent
}

/// Up to `k` sentences per intent. The permutation does not depend on `k`,
/// so a smaller `k` always selects a prefix of a larger one.
pub fn few_shot_split_intent(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    check_k(k)?;
    let selected: BTreeSet<usize> = intent_permutations(ds, seed)
        .values()
        .flat_map(|ids| ids.iter().take(k).copied())
        .collect();
    Ok(ds.subset(&selected, SplitTag::FewShot(k)))
}

/// The three most frequent intents keep up to 300 instances, the rest `k`.
pub fn partial_few_shot_intent(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    check_k(k)?;
    let mut by_freq: Vec<(&str, usize)> = ds.intent_counts().into_iter().collect();
    // most frequent first, ties by label
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let top: BTreeSet<&str> = by_freq
        .iter()
        .take(PARTIAL_TOP_INTENTS)
        .map(|(label, _)| *label)
        .collect();
    let selected: BTreeSet<usize> = intent_permutations(ds, seed)
        .iter()
        .flat_map(|(label, ids)| {
            let quota = if top.contains(label.as_str()) {
                PARTIAL_TOP_SIZE
            } else {
                k
            };
            ids.iter().take(quota).copied()
        })
        .collect();
    Ok(ds.subset(&selected, SplitTag::PartialFewShot(k)))
}

/// Number of spans of each slot type in a BIO sequence.
pub fn slot_mentions<S: AsRef<str>>(slots: &[S]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    let mut prev: Option<&str> = None;
    for label in slots {
        let label = label.as_ref();
        let ty = slot_type(label);
        if let Some(t) = ty {
            let continues = label.starts_with("I-") && prev == Some(t);
            if !continues {
                *counts.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        prev = ty;
    }
    counts
}

/// Selects sentences so that every slot type reaches `k` mentions where the
/// data allows, visiting types from rarest to most frequent.
///
/// The selection is grown one shot level at a time (1, 2, ..., k), each level
/// starting from the previous one, so the k1-shot set contains the k2-shot set
/// for k1 > k2 under the same seed.
pub fn few_shot_split_slot(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    check_k(k)?;
    let mentions: Vec<BTreeMap<String, usize>> =
        ds.sentences.iter().map(|s| slot_mentions(&s.slots)).collect();

    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    let mut candidates: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (pos, m) in mentions.iter().enumerate() {
        for (ty, n) in m {
            *totals.entry(ty.as_str()).or_insert(0) += n;
            candidates.entry(ty.as_str()).or_default().push(pos);
        }
    }
    let mut order: Vec<(&str, usize)> = totals.into_iter().collect();
    // rarest first, ties by label
    order.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for positions in candidates.values_mut() {
        positions.shuffle(&mut rng);
    }

    let mut chosen = vec![false; ds.len()];
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for level in 1..=k {
        for (ty, _) in &order {
            let pool = &candidates[ty];
            let mut cursor = 0;
            while counts.get(ty).copied().unwrap_or(0) < level && cursor < pool.len() {
                let pos = pool[cursor];
                cursor += 1;
                if chosen[pos] {
                    continue;
                }
                chosen[pos] = true;
                for (t, n) in &mentions[pos] {
                    *counts.entry(t.as_str()).or_insert(0) += n;
                }
            }
        }
    }

    let selected: BTreeSet<usize> = chosen
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(pos, _)| ds.sentences[pos].id)
        .collect();
    Ok(ds.subset(&selected, SplitTag::FewShot(k)))
}
