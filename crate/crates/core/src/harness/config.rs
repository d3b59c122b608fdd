use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{Task, Variant};

/// How much of the training file a run sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotSetting {
    Full,
    FewShot(usize),
    /// Top-3 intents keep up to 300 examples, the rest `k`.
    Partial(usize),
}

impl ShotSetting {
    pub fn is_few_shot(self) -> bool {
        !matches!(self, ShotSetting::Full)
    }
}

impl fmt::Display for ShotSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShotSetting::Full => f.write_str("full"),
            ShotSetting::FewShot(k) => write!(f, "{k}-shot"),
            ShotSetting::Partial(k) => write!(f, "partial-{k}"),
        }
    }
}

/// One training run. Missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub variant: Variant,
    pub shots: ShotSetting,
    pub seed: u64,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub rule_path: Option<PathBuf>,
    pub macro_path: Option<PathBuf>,
    pub embedding_path: Option<PathBuf>,
    /// Word vector size when no embedding file is given.
    pub word_dim: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub hidden: usize,
    pub lr: f64,
    /// Defaults to 16 in full few-shot runs and 1 otherwise.
    pub beta_p: Option<f64>,
    pub beta_n: Option<f64>,
    pub tag_dim: usize,
    /// Defaults to 100 for few-shot runs and 30 on full data.
    pub epochs: Option<usize>,
    pub clip: f64,
    pub fuse_init: f64,
    pub freeze_fuse: bool,
    /// Share of full training data held out for best-epoch selection.
    pub heldout_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Intent,
            variant: Variant::Base,
            shots: ShotSetting::Full,
            seed: 1,
            train_path: PathBuf::new(),
            test_path: PathBuf::new(),
            rule_path: None,
            macro_path: None,
            embedding_path: None,
            word_dim: 100,
            batch_size: 16,
            dropout: 0.5,
            hidden: 100,
            lr: 0.001,
            beta_p: None,
            beta_n: None,
            tag_dim: 20,
            epochs: None,
            clip: 5.0,
            fuse_init: 1.0,
            freeze_fuse: false,
            heldout_fraction: 0.1,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_path);
        fix(&mut self.test_path);
        for p in [&mut self.rule_path, &mut self.macro_path, &mut self.embedding_path]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    fn default_beta(&self) -> f64 {
        match self.shots {
            ShotSetting::FewShot(_) => 16.0,
            _ => 1.0,
        }
    }

    pub fn beta_p(&self) -> f64 {
        self.beta_p.unwrap_or_else(|| self.default_beta())
    }

    pub fn beta_n(&self) -> f64 {
        self.beta_n.unwrap_or_else(|| self.default_beta())
    }

    pub fn epochs(&self) -> usize {
        self.epochs
            .unwrap_or(if self.shots.is_few_shot() { 100 } else { 30 })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.hidden == 0 || self.word_dim == 0 {
            return bad("hidden and word_dim must be positive".into());
        }
        if !(self.lr > 0.0 && self.clip > 0.0) {
            return bad("lr and clip must be positive".into());
        }
        if self.beta_p() < 0.0 || self.beta_n() < 0.0 {
            return bad("attention loss weights must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return bad(format!("heldout_fraction {} not in [0, 1)", self.heldout_fraction));
        }
        match self.shots {
            ShotSetting::FewShot(0) | ShotSetting::Partial(0) => bad("k must be at least 1".into()),
            ShotSetting::Partial(_) if self.task == Task::Slot => {
                bad("partial few-shot splits are defined for intent only".into())
            }
            _ if self.variant == Variant::Mixed && self.task == Task::Slot => {
                bad("variant `mixed` is only defined for intent".into())
            }
            _ => Ok(()),
        }
    }

    /// Hex sha256 of the config and the contents of every file it names.
    pub fn hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self)?);
        let files = [
            Some(&self.train_path),
            Some(&self.test_path),
            self.rule_path.as_ref(),
            self.macro_path.as_ref(),
            self.embedding_path.as_ref(),
        ];
        for path in files.into_iter().flatten() {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        Ok(hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }
}
