//! Mini-batch training with best-validation-epoch selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.001,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochLog>,
}

/// Class probabilities `[p_fake, p_real]` and the penultimate
/// representation of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: [f64; 2],
    pub representation: Vec<f64>,
}

/// A supervised objective over indexed samples.
pub trait Objective {
    /// Accumulates the gradient of the mean batch loss into `params` and
    /// returns that loss.
    fn batch_loss_grad(&self, params: &mut ParamStore, batch: &[usize]) -> Result<f64>;

    /// Mean loss over `items` without touching gradients.
    fn loss(&self, params: &ParamStore, items: &[usize]) -> Result<f64>;
}

/// Trains with Adam for `cfg.epochs` epochs and leaves `params` at the
/// weights of the epoch with the lowest validation loss. When `val` is
/// empty the training items double as the validation set.
pub fn fit<O: Objective + ?Sized>(
    objective: &O,
    params: &mut ParamStore,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Invalid("epochs and batch size must be positive".into()));
    }
    let val = if val.is_empty() { train } else { val };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.lr);
    let mut order = train.to_vec();
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    params.zero_grads();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let l = objective.batch_loss_grad(params, batch)?;
            total += l * batch.len() as f64;
            adam.step(params)?;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = objective.loss(params, val)?;
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best.copy_values_from(params)?;
        }
        history.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
    }
    params.copy_values_from(&best)?;
    Ok(TrainOutcome {
        best_epoch,
        best_val_loss: best_loss,
        history,
    })
}
