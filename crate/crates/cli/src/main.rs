use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rulenet::corpus::{
    few_shot_split_intent, few_shot_split_slot, load_dataset, partial_few_shot_intent, SplitKind, SplitManifest,
};
use rulenet::harness::{
    build_for, emit_table, evaluate_model, generate_synthetic, load_report, prepare, run_experiment, stream,
    ExperimentConfig, RunReport,
};
use rulenet::metrics::evaluate_reo;
use rulenet::models::{build_model, random_embeddings, Featurizer, ModelConfig, ModelShape, Task, Variant};
use rulenet::nn::grad_check;
use rulenet::rules::{compile_ruleset, parse_rule_lines, CompiledRuleSet, MacroTable};

/// Regular-expression rules fused with BiLSTM models.
#[derive(Parser)]
#[command(name = "rulenet", version)]
struct Cli {
    /// Seed for splits, synthetic data and initialisation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where outputs go. Defaults differ per command.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitChoice {
    Intent,
    Slot,
    Partial,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic corpus, rule files and macros.
    Synth,
    /// Draw a few-shot subset of a training file.
    Split {
        data: PathBuf,
        #[arg(long, value_enum)]
        kind: SplitChoice,
        #[arg(long)]
        k: usize,
    },
    /// Print rule annotations for each sentence as JSON lines.
    Annotate {
        data: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        macros: PathBuf,
    },
    /// Train one configuration and print its report.
    Train { config: PathBuf },
    /// Score a saved checkpoint, or the rules alone with `--reo`.
    Eval {
        config: PathBuf,
        #[arg(long, conflicts_with = "reo")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        reo: bool,
    },
    /// Render saved reports as a model by shot grid.
    Table {
        /// report.json files or directories to search.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Finite-difference check of a model's gradients on a synthetic sentence.
    Gradcheck {
        #[arg(long, default_value = "intent")]
        task: Task,
        #[arg(long, default_value = "base")]
        variant: Variant,
        #[arg(long, default_value_t = 20)]
        per_param: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe (`rulenet annotate ... | head`) is not a failure
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Synth => {
            let dir = out_dir.unwrap_or_else(|| PathBuf::from("synthetic"));
            let files = generate_synthetic(seed.unwrap_or(7)).write(&dir)?;
            emit(format_args!("{}", files.train.parent().unwrap_or(&dir).display()))?;
        }
        Command::Split { data, kind, k } => split(&data, kind, k, seed.unwrap_or(1), out_dir.as_deref())?,
        Command::Annotate { data, rules, macros } => {
            let ds = load_dataset(&data)?;
            let rs = compile_ruleset(&rules, &macros)?;
            let labels: Vec<String> = ds.intent_labels.clone();
            for s in &ds.sentences {
                let a = rs.annotate(&s.tokens, &labels);
                let line = serde_json::json!({"id": s.id, "tokens": s.tokens, "annotation": a});
                emit(format_args!("{line}"))?;
            }
        }
        Command::Train { config } => {
            let cfg = load_config(&config, seed)?;
            let report = run_experiment(&cfg, out_dir.as_deref())?;
            print_report(&report)?;
        }
        Command::Eval { config, checkpoint, reo } => eval(&config, seed, checkpoint.as_deref(), reo)?,
        Command::Table { paths } => {
            let mut files = Vec::new();
            for p in &paths {
                collect_reports(p, &mut files)?;
            }
            if files.is_empty() {
                bail!("no report.json found");
            }
            files.sort();
            let reports = files.iter().map(load_report).collect::<rulenet::Result<Vec<_>>>()?;
            emit(emit_table(&reports)?.trim_end())?;
        }
        Command::Gradcheck { task, variant, per_param } => gradcheck(task, variant, per_param, seed.unwrap_or(1))?,
    }
    Ok(())
}

fn emit(text: impl Display) -> Result<()> {
    writeln!(io::stdout().lock(), "{text}")?;
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &RunReport) -> Result<()> {
    emit(format_args!("{}", serde_json::to_string_pretty(report)?))?;
    Ok(())
}

fn split(data: &Path, kind: SplitChoice, k: usize, seed: u64, out_dir: Option<&Path>) -> Result<()> {
    let ds = load_dataset(data)?;
    let (subset, kind) = match kind {
        SplitChoice::Intent => (few_shot_split_intent(&ds, k, seed)?, SplitKind::Intent),
        SplitChoice::Slot => (few_shot_split_slot(&ds, k, seed)?, SplitKind::Slot),
        SplitChoice::Partial => (partial_few_shot_intent(&ds, k, seed)?, SplitKind::PartialIntent),
    };
    let manifest = SplitManifest::from_dataset(kind, k, seed, &subset);
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = format!("{}-{k}-seed{seed}", serde_json::to_value(kind)?.as_str().unwrap_or("split"));
    let data_path = dir.join(format!("{stem}.txt"));
    subset.save(&data_path)?;
    let manifest_path = dir.join(format!("{stem}.json"));
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    emit(format_args!("{} sentences -> {}", subset.len(), data_path.display()))?;
    Ok(())
}

fn eval(config: &Path, seed: Option<u64>, checkpoint: Option<&Path>, reo: bool) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let report = if reo {
        let (Some(rules), Some(macros)) = (&cfg.rule_path, &cfg.macro_path) else {
            bail!("--reo needs rule_path and macro_path in the config");
        };
        let rs = compile_ruleset(rules, macros)?;
        let test = load_dataset(&cfg.test_path)?;
        let labels: Vec<String> = match cfg.task {
            Task::Intent => test.intent_labels.clone(),
            Task::Slot => test.slot_labels.clone(),
        };
        evaluate_reo(&rs, &test.sentences, cfg.task, &labels)?
    } else {
        let Some(checkpoint) = checkpoint else {
            bail!("pass --checkpoint or --reo");
        };
        let prepared = prepare(&cfg)?;
        let mut model = build_for(&cfg, &prepared)?;
        model.store_mut().load_checkpoint(checkpoint)?;
        let examples = prepared.featurizer.featurize_all(&prepared.test.sentences, &prepared.vocab)?;
        evaluate_model(&model, &prepared.featurizer, &prepared.test.sentences, &examples)?
    };
    emit(format_args!("{}", report.to_json()?))?;
    Ok(())
}

fn collect_reports(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    for entry in fs::read_dir(path).with_context(|| format!("reading {}", path.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            collect_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

fn synthetic_rules(task: Task, seed: u64) -> Result<(rulenet::corpus::Dataset, CompiledRuleSet)> {
    let corpus = generate_synthetic(seed);
    let macros: BTreeMap<String, Vec<String>> = serde_json::from_str(&corpus.macros)?;
    let text = match task {
        Task::Intent => &corpus.intent_rules,
        Task::Slot => &corpus.slot_rules,
    };
    let specs = parse_rule_lines(text, Path::new("<synthetic>"))?;
    Ok((corpus.train, CompiledRuleSet::compile(specs, MacroTable::new(macros)?)?))
}

fn gradcheck(task: Task, variant: Variant, per_param: usize, seed: u64) -> Result<()> {
    let (train, rules) = synthetic_rules(task, 7)?;
    let labels: Vec<String> = match task {
        Task::Intent => train.intent_labels.clone(),
        Task::Slot => train.slot_labels.clone(),
    };
    let featurizer = Featurizer::new(task, &rules, labels);
    // the first short sentence that some rule fires on
    let sentence = train
        .sentences
        .iter()
        .filter(|s| s.tokens.len() <= 8)
        .find(|s| !rules.annotate_intent(&s.tokens).is_empty() || rules.annotate_slots(&s.tokens).iter().any(|t| !t.is_empty()))
        .context("no synthetic sentence matches a rule")?;
    let vocab = rulenet::corpus::Vocab::new(sentence.tokens.iter().cloned());
    let example = featurizer.featurize(sentence, &vocab)?;

    let config = ModelConfig {
        hidden: 4,
        tag_dim: 3,
        dropout: 0.0,
        fuse_init: 0.5,
        seed,
        ..ModelConfig::default()
    };
    let shape = ModelShape {
        embeddings: random_embeddings(vocab.len(), 5, &mut stream(seed, "gradcheck-embeddings")),
        num_labels: featurizer.labels().len(),
        num_tags: featurizer.tags().len(),
    };
    let model = build_model(variant, task, config, shape)?;
    let mut store = model.store().clone();
    let report = grad_check(
        &mut store,
        |s, g| model.loss_with(s, &example, None, g),
        1e-5,
        per_param,
        &mut stream(seed, "gradcheck"),
    )?;
    emit(format_args!(
        "{task}/{variant}: max relative error {:.3e} over {} coordinates (worst: {})",
        report.max_relative_error,
        report.coordinates_checked,
        report.worst_param.as_deref().unwrap_or("-")
    ))?;
    if report.max_relative_error > 1e-4 {
        bail!("gradient check failed");
    }
    Ok(())
}
