use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{Example, Model};
use crate::nn::{AdamConfig, AdamState, Gradients, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean per-example loss of every epoch.
    pub loss_curve: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    /// Held-out score per epoch, when a held-out set was used.
    pub heldout_curve: Vec<f64>,
}

/// Runs one epoch of shuffled mini-batch Adam and returns the mean loss.
pub fn train_epoch(
    model: &mut Model,
    adam: &mut AdamState,
    examples: &[Example],
    settings: &TrainSettings,
    shuffle_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(shuffle_rng);
    let mut grads = Gradients::for_store(model.store());
    let mut total = 0.0;
    for batch in order.chunks(settings.batch_size) {
        grads.zero();
        for &i in batch {
            total += model.loss_with(model.store(), &examples[i], Some(&mut *dropout_rng), Some(&mut grads))?;
        }
        grads.scale(1.0 / batch.len() as f64);
        grads.clip_global_norm(model.store(), settings.clip);
        adam.step(model.store_mut(), &mut grads)?;
    }
    Ok(total / examples.len() as f64)
}

/// Trains for a fixed number of epochs. With a held-out scorer, the
/// parameters of the best-scoring epoch (earliest on ties) are restored at
/// the end; otherwise the final parameters are kept.
pub fn train(
    model: &mut Model,
    examples: &[Example],
    settings: &TrainSettings,
    mut heldout: Option<&mut dyn FnMut(&Model) -> Result<f64>>,
    shuffle_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    let mut adam = AdamState::new(
        model.store(),
        AdamConfig {
            lr: settings.lr,
            ..AdamConfig::default()
        },
    );
    let mut outcome = TrainOutcome {
        loss_curve: Vec::with_capacity(settings.epochs),
        selected_epoch: settings.epochs,
        heldout_curve: Vec::new(),
    };
    let mut best: Option<(f64, ParamStore)> = None;
    for epoch in 1..=settings.epochs {
        let loss = train_epoch(model, &mut adam, examples, settings, shuffle_rng, dropout_rng)?;
        log::debug!("epoch {epoch}: loss {loss:.5}");
        outcome.loss_curve.push(loss);
        if let Some(score) = heldout.as_deref_mut() {
            let s = score(model)?;
            outcome.heldout_curve.push(s);
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, model.store().clone()));
                outcome.selected_epoch = epoch;
            }
        }
    }
    if let Some((_, store)) = best {
        *model.store_mut() = store;
    }
    Ok(outcome)
}
