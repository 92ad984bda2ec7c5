//! Mini-batch training loop shared by the twin network and the baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, DropoutMasks, Gradients, Network, OptimizerKind, OptimizerState};
use crate::scalar::Scalar;
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Samples (or ordered pairs) per gradient step.
    pub batch_size: usize,
    /// Coefficient of the summed squared weights added to the loss.
    pub l2_penalty: f64,
    /// Hidden-unit dropout during training; 0 disables it.
    pub dropout_rate: f64,
    /// Validation checks without improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Gradient steps between validation checks. `None` validates once per
    /// pass over the data (all `n²` pairs for the twin network). A fixed
    /// count runs across pass boundaries; the pair stream itself always
    /// completes each epoch before reshuffling.
    pub steps_per_epoch: Option<usize>,
    /// Training anchors paired with each validation point for the twin
    /// validation loss.
    pub val_anchors: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            l2_penalty: 0.0,
            dropout_rate: 0.0,
            patience: 50,
            max_epochs: 2000,
            seed: 0,
            optimizer: OptimizerKind::default(),
            steps_per_epoch: None,
            val_anchors: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Config(
                "l2_penalty must be a nonnegative number".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience and max_epochs must be positive".into(),
            ));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        if self.val_anchors == 0 {
            return Err(Error::Config("val_anchors must be positive".into()));
        }
        Ok(())
    }

    /// Same configuration under a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochLoss>,
    /// Epoch whose weights were restored; `None` if no epoch beat the initial weights.
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub total_steps: usize,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,steps,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.steps, e.train_loss, e.val_loss
            ));
        }
        s
    }
}

/// One mini-batch: row-major inputs and their targets.
pub(crate) struct Batch<T> {
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
    pub ends_epoch: bool,
}

pub(crate) trait BatchSource<T> {
    fn next_batch(&mut self) -> Batch<T>;
}

/// Runs gradient steps until the validation loss stops improving, then
/// restores the best weights seen (including the initial ones).
pub(crate) fn fit<T, S, V>(
    net: &mut Network<T>,
    source: &mut S,
    mut val_loss: V,
    cfg: &TrainConfig,
) -> Result<History>
where
    T: Scalar,
    S: BatchSource<T>,
    V: FnMut(&Network<T>) -> Result<T>,
{
    cfg.validate()?;
    let mut opt = OptimizerState::new(cfg.optimizer, net);
    let mut drop_rng = seed::rng(seed::derive(cfg.seed, stream::DROPOUT));
    let mut grads = Gradients::zeros_like(net);
    let l2 = T::from_f64_lossy(cfg.l2_penalty);

    let initial = val_loss(net)?.to_f64_exact();
    if !initial.is_finite() {
        return Err(Error::Diverged { epoch: 0, batch: 0 });
    }
    let mut history = History {
        initial_val_loss: initial,
        epochs: Vec::new(),
        best_epoch: None,
        best_val_loss: initial,
        stopped_early: false,
        total_steps: 0,
    };
    let mut best_net = net.clone();
    let mut wait = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut steps = 0usize;
        loop {
            let batch = source.next_batch();
            let b = batch.targets.len();
            if b == 0 {
                break;
            }
            let masks = (cfg.dropout_rate > 0.0 && net.num_layers() > 1)
                .then(|| DropoutMasks::hidden(net, b, cfg.dropout_rate, &mut drop_rng));
            let cache = net.forward_batch(&batch.inputs, b, masks.as_ref())?;
            let loss = nn::mse_loss_with_l2(cache.output(), &batch.targets, net, l2)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: steps,
                });
            }
            let d_out = nn::mse_gradient(cache.output(), &batch.targets);
            net.backward_into(&cache, &d_out, &mut grads)?;
            nn::add_l2_gradient(net, &mut grads, l2);
            opt.step(net, &grads).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Diverged {
                    epoch,
                    batch: steps,
                },
                other => other,
            })?;
            loss_sum += loss.to_f64_exact() * b as f64;
            seen += b;
            steps += 1;
            if cfg.steps_per_epoch.map_or(batch.ends_epoch, |k| steps >= k) {
                break;
            }
        }
        history.total_steps += steps;
        let v = val_loss(net)?.to_f64_exact();
        if !v.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: steps,
            });
        }
        history.epochs.push(EpochLoss {
            epoch,
            steps,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss: v,
        });
        if v < history.best_val_loss {
            history.best_val_loss = v;
            history.best_epoch = Some(epoch);
            best_net.clone_from(net);
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    *net = best_net;
    Ok(history)
}
