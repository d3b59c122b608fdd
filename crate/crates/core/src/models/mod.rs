//! Base BiLSTM models and the three ways of fusing rules into them.
//!
//! | variant    | rules used as                                        |
//! |------------|------------------------------------------------------|
//! | `base`     | nothing                                              |
//! | `feat`     | averaged tag embeddings (classifier input / encoder input) |
//! | `logit`    | `logit_k + w_k z_k`                                  |
//! | `two`      | two-side attention, no attention loss                |
//! | `two_posi` | two-side attention, positive attention loss          |
//! | `two_neg`  | two-side attention, negative attention loss          |
//! | `two_both` | two-side attention, both attention losses            |
//! | `mixed`    | `feat` + `logit` + `two_both` (intent only)          |

mod features;
mod intent;
mod loss;
mod slot;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{dropout_mask, glorot, BiLstm, Gradients, Graph, Matrix, ParamId, ParamStore, Var};

pub use features::{Example, Featurizer, NONE_TAG};
pub use intent::{
    intent_forward_base, intent_forward_two_side, IntentBaseParams, IntentOutput,
    TwoSideIntentParams, TwoSideOutput,
};
pub use loss::{attention_loss, attention_loss_value, fuse_logits, total_loss, LossWeights};
pub use slot::{
    slot_forward_base, slot_forward_feat, slot_forward_two_side, SlotBaseParams,
    SlotTwoSideOutput, SlotTwoSideParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Intent,
    Slot,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Intent => "intent",
            Task::Slot => "slot",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intent" => Ok(Task::Intent),
            "slot" => Ok(Task::Slot),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    Feat,
    Logit,
    Two,
    TwoPosi,
    TwoNeg,
    TwoBoth,
    Mixed,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Base,
        Variant::Feat,
        Variant::Logit,
        Variant::Two,
        Variant::TwoPosi,
        Variant::TwoNeg,
        Variant::TwoBoth,
        Variant::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Feat => "feat",
            Variant::Logit => "logit",
            Variant::Two => "two",
            Variant::TwoPosi => "two_posi",
            Variant::TwoNeg => "two_neg",
            Variant::TwoBoth => "two_both",
            Variant::Mixed => "mixed",
        }
    }

    pub fn uses_tag_features(self) -> bool {
        matches!(self, Variant::Feat | Variant::Mixed)
    }

    pub fn uses_logit_fusion(self) -> bool {
        matches!(self, Variant::Logit | Variant::Mixed)
    }

    pub fn uses_two_side(self) -> bool {
        matches!(
            self,
            Variant::Two | Variant::TwoPosi | Variant::TwoNeg | Variant::TwoBoth | Variant::Mixed
        )
    }

    pub fn positive_attention_loss(self) -> bool {
        matches!(self, Variant::TwoPosi | Variant::TwoBoth | Variant::Mixed)
    }

    pub fn negative_attention_loss(self) -> bool {
        matches!(self, Variant::TwoNeg | Variant::TwoBoth | Variant::Mixed)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub tag_dim: usize,
    pub dropout: f64,
    pub beta_p: f64,
    pub beta_n: f64,
    /// Initial value of the per-label output-fusion weights.
    pub fuse_init: f64,
    pub freeze_fuse: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            tag_dim: 20,
            dropout: 0.5,
            beta_p: 1.0,
            beta_n: 1.0,
            fuse_init: 1.0,
            freeze_fuse: false,
            seed: 1,
        }
    }
}

/// Sizes the model is built for.
#[derive(Debug, Clone)]
pub struct ModelShape {
    /// `[vocab × d]` initial word vectors.
    pub embeddings: Matrix,
    pub num_labels: usize,
    /// Rows of the tag table, NONE included.
    pub num_tags: usize,
}

#[derive(Debug, Clone, Copy)]
enum Head {
    IntentBase(IntentBaseParams),
    IntentTwo(TwoSideIntentParams),
    SlotBase(SlotBaseParams),
    SlotTwo(SlotTwoSideParams),
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// `[1 × K]` for intent, `[n × L]` for slot.
    pub logits: Var,
    pub alpha_pos: Option<Var>,
    pub alpha_neg: Option<Var>,
    /// Base-model attention `[1 × n]` (intent base/feat/logit).
    pub alpha: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub task: Task,
    pub variant: Variant,
    pub config: ModelConfig,
    pub num_labels: usize,
    store: ParamStore,
    embed: ParamId,
    tags: Option<ParamId>,
    encoder: BiLstm,
    head: Head,
    fuse: Option<ParamId>,
    weights: LossWeights,
}

/// Each parameter draws from its own stream, so variants built with the same
/// seed share the initial values of the parameters they have in common.
fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&hasher.finalize());
    ChaCha8Rng::from_seed(key)
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    seed: u64,
}

impl Builder<'_> {
    fn glorot(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let mut rng = param_rng(self.seed, name);
        self.store.add(name, glorot(rows, cols, &mut rng))
    }

    fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.store.add(name, Matrix::zeros(rows, cols))
    }
}

/// Builds a model for one task and variant.
pub fn build_model(variant: Variant, task: Task, config: ModelConfig, shape: ModelShape) -> Result<Model> {
    if variant == Variant::Mixed && task == Task::Slot {
        return Err(Error::Config("variant `mixed` is only defined for intent".into()));
    }
    if variant.uses_tag_features() && config.tag_dim == 0 {
        return Err(Error::Config(format!("variant `{variant}` needs tag_dim > 0")));
    }
    if shape.num_labels == 0 {
        return Err(Error::Config("model needs at least one label".into()));
    }
    if !(0.0..1.0).contains(&config.dropout) {
        return Err(Error::Config(format!("dropout {} not in [0, 1)", config.dropout)));
    }
    let weights = LossWeights::new(
        if variant.positive_attention_loss() { config.beta_p } else { 0.0 },
        if variant.negative_attention_loss() { config.beta_n } else { 0.0 },
    )?;

    let mut store = ParamStore::new();
    let word_dim = shape.embeddings.cols();
    let h2 = 2 * config.hidden;
    let k = shape.num_labels;
    let embed = store.add("word_embedding", shape.embeddings);

    let mut b = Builder {
        store: &mut store,
        seed: config.seed,
    };
    let tags = variant.uses_tag_features().then(|| {
        let mut rng = param_rng(config.seed, "tag_embedding");
        let table = glorot(shape.num_tags.max(1), config.tag_dim, &mut rng);
        b.store.add("tag_embedding", table)
    });
    let feat_width = if tags.is_some() { config.tag_dim } else { 0 };

    let encoder_input = match task {
        Task::Slot => word_dim + feat_width,
        Task::Intent => word_dim,
    };
    let mut enc_rng = param_rng(config.seed, "encoder");
    let encoder = BiLstm::new(b.store, "encoder", encoder_input, config.hidden, &mut enc_rng);

    let head = match (task, variant.uses_two_side()) {
        (Task::Intent, false) => Head::IntentBase(IntentBaseParams {
            att_w: b.glorot("intent.att_w", h2, h2),
            att_c: b.glorot("intent.att_c", h2, 1),
            cls_w: b.glorot("intent.cls_w", h2 + feat_width, k),
            cls_b: b.zeros("intent.cls_b", 1, k),
        }),
        (Task::Intent, true) => Head::IntentTwo(TwoSideIntentParams {
            att_wa: b.glorot("intent.att_wa", h2, h2),
            ctx_pos: b.glorot("intent.ctx_pos", k, h2),
            ctx_neg: b.glorot("intent.ctx_neg", k, h2),
            out_w_pos: b.glorot("intent.out_w_pos", k, h2 + feat_width),
            out_b_pos: b.zeros("intent.out_b_pos", 1, k),
            out_w_neg: b.glorot("intent.out_w_neg", k, h2 + feat_width),
            out_b_neg: b.zeros("intent.out_b_neg", 1, k),
        }),
        (Task::Slot, false) => Head::SlotBase(SlotBaseParams {
            cls_w: b.glorot("slot.cls_w", h2, k),
            cls_b: b.zeros("slot.cls_b", 1, k),
        }),
        (Task::Slot, true) => Head::SlotTwo(SlotTwoSideParams {
            w_sp: b.glorot("slot.w_sp", h2, h2),
            w_sn: b.glorot("slot.w_sn", h2, h2),
            w_p: b.glorot("slot.w_p", 2 * h2, k),
            b_p: b.zeros("slot.b_p", 1, k),
            w_n: b.glorot("slot.w_n", 2 * h2, k),
            b_n: b.zeros("slot.b_n", 1, k),
        }),
    };

    let fuse = variant.uses_logit_fusion().then(|| {
        let id = b.store.add("fuse_w", Matrix::filled(1, k, config.fuse_init));
        if config.freeze_fuse {
            b.store.set_trainable(id, false);
        }
        id
    });

    Ok(Model {
        task,
        variant,
        config,
        num_labels: k,
        store,
        embed,
        tags,
        encoder,
        head,
        fuse,
        weights,
    })
}

/// Averaging matrix over tag rows: row `r` spreads `1/m` over its `m` tags,
/// or puts 1 on NONE when it has none.
fn tag_average(rows: &[Vec<usize>], num_tags: usize) -> Matrix {
    let mut avg = Matrix::zeros(rows.len(), num_tags);
    for (r, tags) in rows.iter().enumerate() {
        if tags.is_empty() {
            avg.set(r, 0, 1.0);
        } else {
            let w = 1.0 / tags.len() as f64;
            for &t in tags {
                let cur = avg.get(r, t);
                avg.set(r, t, cur + w);
            }
        }
    }
    avg
}

/// Mean tag embedding per row (NONE row for empty tag lists).
pub fn aggregate_tags(g: &mut Graph<'_>, table: ParamId, rows: &[Vec<usize>]) -> Result<Var> {
    let num_tags = g.store().value(table).rows();
    if let Some(bad) = rows.iter().flatten().find(|&&t| t >= num_tags) {
        return Err(Error::UnknownTag(format!("tag index {bad}")));
    }
    let avg = g.constant(tag_average(rows, num_tags));
    let table = g.param(table);
    g.matmul(avg, table)
}

impl Model {
    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.weights
    }

    pub fn encoder(&self) -> &BiLstm {
        &self.encoder
    }

    pub fn fuse_param(&self) -> Option<ParamId> {
        self.fuse
    }

    /// Forward pass. With `dropout_rng`, dropout is applied to the word
    /// embeddings and to the encoder states; without it the pass is
    /// deterministic (evaluation mode).
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        ex: &Example,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardOutput> {
        let n = ex.words.len();
        if n == 0 {
            return Err(Error::Shape("empty sentence".into()));
        }
        let mut drop = |g: &mut Graph<'_>, v: Var| -> Result<Var> {
            match dropout_rng.as_deref_mut() {
                Some(rng) if self.config.dropout > 0.0 => {
                    let (r, c) = g.shape(v);
                    let mask = dropout_mask(r, c, self.config.dropout, rng);
                    g.mul_const(v, mask)
                }
                _ => Ok(v),
            }
        };

        let words = g.gather(self.embed, &ex.words)?;
        let mut x = drop(g, words)?;
        let mut intent_features = None;
        if let Some(table) = self.tags {
            match self.task {
                Task::Slot => {
                    if ex.tags.len() != n {
                        return Err(Error::Shape(format!(
                            "{} tag rows for {n} tokens",
                            ex.tags.len()
                        )));
                    }
                    let f = aggregate_tags(g, table, &ex.tags)?;
                    x = slot_forward_feat(g, x, f)?;
                }
                Task::Intent => {
                    let row = ex.tags.first().cloned().unwrap_or_default();
                    intent_features = Some(aggregate_tags(g, table, &[row])?);
                }
            }
        }
        let h = self.encoder.forward(g, x)?;
        let h = drop(g, h)?;

        let mut out = match &self.head {
            Head::IntentBase(p) => {
                let o = intent_forward_base(g, h, p, intent_features)?;
                ForwardOutput {
                    logits: o.logits,
                    alpha_pos: None,
                    alpha_neg: None,
                    alpha: Some(o.alpha),
                }
            }
            Head::IntentTwo(p) => {
                let o = intent_forward_two_side(g, h, p, intent_features)?;
                ForwardOutput {
                    logits: o.logits,
                    alpha_pos: Some(o.alpha_pos),
                    alpha_neg: Some(o.alpha_neg),
                    alpha: None,
                }
            }
            Head::SlotBase(p) => ForwardOutput {
                logits: slot_forward_base(g, h, p)?,
                alpha_pos: None,
                alpha_neg: None,
                alpha: None,
            },
            Head::SlotTwo(p) => {
                let o = slot_forward_two_side(g, h, p)?;
                ForwardOutput {
                    logits: o.logits,
                    alpha_pos: Some(o.alpha_pos),
                    alpha_neg: Some(o.alpha_neg),
                    alpha: None,
                }
            }
        };
        if let Some(w) = self.fuse {
            out.logits = fuse_logits(g, out.logits, &ex.z, w)?;
        }
        Ok(out)
    }

    /// Classification loss plus the weighted attention losses this variant
    /// uses.
    pub fn loss(
        &self,
        g: &mut Graph<'_>,
        ex: &Example,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if ex.gold.is_empty() {
            return Err(Error::InvalidArgument("example has no gold labels".into()));
        }
        let out = self.forward(g, ex, dropout_rng)?;
        let loss_c = g.cross_entropy(out.logits, &ex.gold)?;
        let att_p = match out.alpha_pos {
            Some(a) if self.variant.positive_attention_loss() => Some(attention_loss(g, a, &ex.t_pos)?),
            _ => None,
        };
        let att_n = match out.alpha_neg {
            Some(a) if self.variant.negative_attention_loss() => Some(attention_loss(g, a, &ex.t_neg)?),
            _ => None,
        };
        total_loss(g, loss_c, att_p, att_n, self.weights)
    }

    /// Loss of one example evaluated against `store` (normally a copy of
    /// [`Model::store`]), accumulating gradients when `grads` is given.
    pub fn loss_with(
        &self,
        store: &ParamStore,
        ex: &Example,
        dropout_rng: Option<&mut ChaCha8Rng>,
        grads: Option<&mut Gradients>,
    ) -> Result<f64> {
        let mut g = Graph::new(store);
        let loss = self.loss(&mut g, ex, dropout_rng)?;
        let value = g.scalar(loss)?;
        if let Some(grads) = grads {
            g.backward(loss, grads)?;
        }
        Ok(value)
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, ex: &Example) -> Result<Matrix> {
        let mut g = Graph::new(&self.store);
        let out = self.forward(&mut g, ex, None)?;
        g.check_finite()?;
        Ok(g.value(out.logits).clone())
    }

    /// Arg-max label per row: one entry for intent, one per token for slot.
    pub fn predict(&self, ex: &Example) -> Result<Vec<usize>> {
        let logits = self.logits(ex)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Random word vectors, used where no pre-trained table is supplied.
pub fn random_embeddings<R: Rng>(vocab: usize, dim: usize, rng: &mut R) -> Matrix {
    Matrix::from_vec(
        vocab,
        dim,
        (0..vocab * dim).map(|_| rng.gen_range(-0.25..=0.25)).collect(),
    )
}
