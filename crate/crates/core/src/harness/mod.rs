//! Experiment runner: split, annotate, build, train, evaluate, report.

mod config;
mod synth;
mod table;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    few_shot_split_intent, few_shot_split_slot, load_dataset_as, partial_few_shot_intent,
    read_vectors, Dataset, EmbeddingTable, Sentence, SplitTag, Vocab,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_intent, evaluate_slot, EvalReport};
use crate::models::{build_model, Example, Featurizer, Model, ModelConfig, ModelShape, Task};
use crate::nn::Matrix;
use crate::rules::{compile_ruleset, CompiledRuleSet};

pub use config::{ExperimentConfig, ShotSetting};
pub use synth::{generate_synthetic, SyntheticCorpus, SyntheticFiles, SYNTH_TEST_SIZE, SYNTH_TRAIN_SIZE};
pub use table::emit_table;
pub use train::{train, train_epoch, TrainOutcome, TrainSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub eval: EvalReport,
    pub loss_curve: Vec<f64>,
    pub heldout_curve: Vec<f64>,
    pub selected_epoch: usize,
    pub train_size: usize,
    pub vocab_size: usize,
    pub vectors_found: usize,
    pub wall_time_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Everything a run needs before training starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub vocab: Vocab,
    pub embeddings: EmbeddingTable,
    pub featurizer: Featurizer,
}

/// Seeds a generator for one purpose within a run.
pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&hasher.finalize());
    ChaCha8Rng::from_seed(key)
}

/// Applies the configured few-shot split to the training file.
pub fn split_training(full: &Dataset, task: Task, shots: ShotSetting, seed: u64) -> Result<Dataset> {
    match (shots, task) {
        (ShotSetting::Full, _) => Ok(full.clone()),
        (ShotSetting::FewShot(k), Task::Intent) => few_shot_split_intent(full, k, seed),
        (ShotSetting::FewShot(k), Task::Slot) => few_shot_split_slot(full, k, seed),
        (ShotSetting::Partial(k), Task::Intent) => partial_few_shot_intent(full, k, seed),
        (ShotSetting::Partial(_), Task::Slot) => Err(Error::Config(
            "partial few-shot splits are defined for intent only".into(),
        )),
    }
}

fn load_rules(cfg: &ExperimentConfig) -> Result<CompiledRuleSet> {
    match (&cfg.rule_path, &cfg.macro_path) {
        (Some(rules), Some(macros)) => compile_ruleset(rules, macros),
        (Some(rules), None) => {
            let specs = crate::rules::load_rule_specs(rules)?;
            CompiledRuleSet::compile(specs, Default::default())
        }
        (None, _) => Ok(CompiledRuleSet::empty()),
    }
}

/// Loads data and rules, splits, and builds vocabulary and word vectors.
///
/// The label inventory is the union of training-file and test labels. The
/// vocabulary holds the split's training words plus test words that have a
/// pre-trained vector; everything else maps to `<unk>`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let full = load_dataset_as(&cfg.train_path, SplitTag::Train)?;
    let test = load_dataset_as(&cfg.test_path, SplitTag::Test)?;
    let train = split_training(&full, cfg.task, cfg.shots, cfg.seed)?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }

    let labels: Vec<String> = {
        let (a, b) = match cfg.task {
            Task::Intent => (&full.intent_labels, &test.intent_labels),
            Task::Slot => (&full.slot_labels, &test.slot_labels),
        };
        a.iter().chain(b).cloned().collect::<BTreeSet<_>>().into_iter().collect()
    };
    let rules = load_rules(cfg)?;
    let featurizer = Featurizer::new(cfg.task, &rules, labels);

    let train_words: Vec<&String> = train.sentences.iter().flat_map(|s| &s.tokens).collect();
    let (vocab, embeddings) = match &cfg.embedding_path {
        Some(path) => {
            let wanted: BTreeSet<&str> = train_words
                .iter()
                .map(|w| w.as_str())
                .chain(test.sentences.iter().flat_map(|s| s.tokens.iter().map(String::as_str)))
                .collect();
            let (dim, known) = read_vectors(path, |w| wanted.contains(w))?;
            let extra = test
                .sentences
                .iter()
                .flat_map(|s| &s.tokens)
                .filter(|w| known.contains_key(w.as_str()));
            let vocab = Vocab::new(train_words.iter().map(|w| w.to_string()).chain(extra.cloned()));
            let dim = dim.unwrap_or_else(|| {
                log::warn!("embedding file {} is empty; using random vectors", path.display());
                cfg.word_dim
            });
            let table = EmbeddingTable::from_map(&vocab, dim, &known, cfg.seed);
            (vocab, table)
        }
        None => {
            let vocab = Vocab::new(train_words.iter().map(|w| w.to_string()));
            let table = EmbeddingTable::from_map(&vocab, cfg.word_dim, &HashMap::new(), cfg.seed);
            (vocab, table)
        }
    };
    Ok(Prepared {
        train,
        test,
        vocab,
        embeddings,
        featurizer,
    })
}

pub fn model_config(cfg: &ExperimentConfig) -> ModelConfig {
    ModelConfig {
        hidden: cfg.hidden,
        tag_dim: cfg.tag_dim,
        dropout: cfg.dropout,
        beta_p: cfg.beta_p(),
        beta_n: cfg.beta_n(),
        fuse_init: cfg.fuse_init,
        freeze_fuse: cfg.freeze_fuse,
        seed: cfg.seed,
    }
}

pub fn build_for(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<Model> {
    let emb = &prepared.embeddings;
    let shape = ModelShape {
        embeddings: Matrix::from_vec(emb.vectors.len(), emb.dim, emb.vectors.concat()),
        num_labels: prepared.featurizer.labels().len(),
        num_tags: prepared.featurizer.tags().len(),
    };
    build_model(cfg.variant, cfg.task, model_config(cfg), shape)
}

/// Scores a model on labelled sentences. The macro label set is the set of
/// gold labels occurring in `sentences`.
pub fn evaluate_model(
    model: &Model,
    featurizer: &Featurizer,
    sentences: &[Sentence],
    examples: &[Example],
) -> Result<EvalReport> {
    let labels = featurizer.labels();
    let mut preds = Vec::with_capacity(examples.len());
    for ex in examples {
        preds.push(
            model
                .predict(ex)?
                .into_iter()
                .map(|i| labels[i].clone())
                .collect::<Vec<_>>(),
        );
    }
    match model.task {
        Task::Intent => {
            let gold: Vec<&str> = sentences.iter().map(|s| s.intent.as_str()).collect();
            let pred: Vec<String> = preds.into_iter().map(|mut p| p.remove(0)).collect();
            let set: Vec<String> = gold.iter().map(|g| g.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
            evaluate_intent(&pred, &gold, &set)
        }
        Task::Slot => {
            let gold: Vec<Vec<String>> = sentences.iter().map(|s| s.slots.clone()).collect();
            let set: Vec<String> = gold.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            evaluate_slot(&preds, &gold, &set, false)
        }
    }
}

/// The score used for best-epoch selection.
fn selection_score(report: &EvalReport) -> f64 {
    report.accuracy.or(report.micro_f1).unwrap_or(report.macro_f1)
}

/// Runs one experiment end to end. With `out_dir`, the report and the kept
/// parameters are written under `out_dir/<config-hash>/`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    let started = Instant::now();
    let config_hash = cfg.hash()?;
    let prepared = prepare(cfg)?;
    let featurizer = &prepared.featurizer;

    let mut train_sentences = prepared.train.sentences.clone();
    let mut heldout_sentences = Vec::new();
    if !cfg.shots.is_few_shot() && cfg.heldout_fraction > 0.0 {
        train_sentences.shuffle(&mut stream(cfg.seed, "heldout"));
        let n = (train_sentences.len() as f64 * cfg.heldout_fraction).ceil() as usize;
        if n < train_sentences.len() {
            heldout_sentences = train_sentences.drain(..n).collect();
        }
    }
    let train_examples = featurizer.featurize_all(&train_sentences, &prepared.vocab)?;
    let heldout_examples = featurizer.featurize_all(&heldout_sentences, &prepared.vocab)?;
    let test_examples = featurizer.featurize_all(&prepared.test.sentences, &prepared.vocab)?;

    let mut model = build_for(cfg, &prepared)?;
    let settings = TrainSettings {
        epochs: cfg.epochs(),
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        clip: cfg.clip,
    };
    let mut scorer = |m: &Model| -> Result<f64> {
        let report = evaluate_model(m, featurizer, &heldout_sentences, &heldout_examples)?;
        Ok(selection_score(&report))
    };
    let heldout: Option<&mut dyn FnMut(&Model) -> Result<f64>> = if heldout_examples.is_empty() {
        None
    } else {
        Some(&mut scorer)
    };
    let outcome = train(
        &mut model,
        &train_examples,
        &settings,
        heldout,
        &mut stream(cfg.seed, "shuffle"),
        &mut stream(cfg.seed, "dropout"),
    )?;
    let eval = evaluate_model(&model, featurizer, &prepared.test.sentences, &test_examples)?;

    let mut report = RunReport {
        config_hash,
        config: cfg.clone(),
        eval,
        loss_curve: outcome.loss_curve,
        heldout_curve: outcome.heldout_curve,
        selected_epoch: outcome.selected_epoch,
        train_size: train_examples.len(),
        vocab_size: prepared.vocab.len(),
        vectors_found: prepared.embeddings.found,
        wall_time_secs: 0.0,
        checkpoint: None,
    };
    if let Some(dir) = out_dir {
        let dir = dir.join(&report.config_hash);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let checkpoint = dir.join("model.json");
        model.store().save_checkpoint(&checkpoint)?;
        report.checkpoint = Some(checkpoint);
        report.wall_time_secs = started.elapsed().as_secs_f64();
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
    } else {
        report.wall_time_secs = started.elapsed().as_secs_f64();
    }
    Ok(report)
}

/// Reads a report written by [`run_experiment`].
pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
