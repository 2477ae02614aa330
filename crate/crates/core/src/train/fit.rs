use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Real;

use super::optim::{clip_gradients, Optimizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub clip: f64,
    pub decay: f64,
    pub patience: usize,
    pub finetune_lr: f64,
    pub finetune_clip: f64,
    pub batch_size: usize,
    /// Safety cap on epochs per phase; the patience rule normally stops first.
    pub max_epochs: usize,
    pub finetune_max_epochs: usize,
    pub finetune: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            clip: 1.0,
            decay: 0.5,
            patience: 3,
            finetune_lr: 0.1,
            finetune_clip: 0.1,
            batch_size: crate::data::BATCH_SIZE,
            max_epochs: 50,
            finetune_max_epochs: 20,
            finetune: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("clip", self.clip),
            ("finetune_lr", self.finetune_lr),
            ("finetune_clip", self.finetune_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1), got {}", self.decay)));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience, batch_size and max_epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One optimization phase: what to step with and how hard to clip.
#[derive(Clone, Debug)]
pub struct Phase {
    pub name: &'static str,
    pub optimizer: Optimizer,
    pub lr: f64,
    pub clip: f64,
    pub decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Dev perplexity the phase has to beat; `None` accepts the first epoch.
    pub initial_best: Option<f64>,
}

impl Phase {
    pub fn adam(cfg: &TrainConfig) -> Self {
        Self {
            name: "adam",
            optimizer: Optimizer::adam(),
            lr: cfg.lr,
            clip: cfg.clip,
            decay: cfg.decay,
            patience: cfg.patience,
            max_epochs: cfg.max_epochs,
            initial_best: None,
        }
    }

    pub fn sgd(cfg: &TrainConfig) -> Self {
        Self {
            name: "sgd",
            optimizer: Optimizer::Sgd,
            lr: cfg.finetune_lr,
            clip: cfg.finetune_clip,
            decay: cfg.decay,
            patience: cfg.patience,
            max_epochs: cfg.finetune_max_epochs,
            initial_best: None,
        }
    }
}

/// Supplies batches, losses and dev perplexity to [`fit`].
pub trait Objective<R: Real> {
    /// Prepares the next epoch and returns its batch count. Called once per
    /// epoch over the objective's lifetime, across phases and restarts.
    fn begin_epoch(&mut self) -> usize;

    /// Accumulates the gradient of batch `batch` into `params` (already zeroed)
    /// and returns `(summed loss, scored tokens)`.
    fn batch(&mut self, params: &mut ParamStore<R>, batch: usize) -> Result<(f64, usize)>;

    fn dev_perplexity(&mut self, params: &ParamStore<R>) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    /// Mean training loss per scored token.
    pub train_loss: f64,
    pub dev_ppl: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub improved: bool,
    /// True when this epoch triggered a reload of the best parameters.
    pub restart: bool,
    pub max_grad_norm: f64,
    pub max_clipped_norm: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .filter(|r| r.improved)
            .min_by(|a, b| a.dev_ppl.total_cmp(&b.dev_ppl))
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.records.extend(other.records);
    }

    /// JSON lines: the `header` object first, then one record per epoch.
    pub fn write_jsonl(&self, path: impl AsRef<Path>, header: &serde_json::Value) -> Result<()> {
        let path = path.as_ref();
        let mut out = serde_json::to_string(header)?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    /// Records without timing, for determinism comparisons.
    pub fn without_timing(&self) -> Vec<EpochRecord> {
        self.records
            .iter()
            .map(|r| EpochRecord {
                wall_time: 0.0,
                ..r.clone()
            })
            .collect()
    }
}

/// Epoch loop with restarts: a strictly better dev perplexity makes the
/// current parameters the new best; otherwise the best parameters are
/// reloaded, the learning rate is multiplied by `decay` and the optimizer
/// state is reset. Stops after `patience` consecutive non-improving epochs.
/// On return `params` holds the best parameters seen.
pub fn fit<R: Real, O: Objective<R>>(
    params: &mut ParamStore<R>,
    objective: &mut O,
    mut phase: Phase,
    mut on_improve: impl FnMut(&ParamStore<R>, &EpochRecord) -> Result<()>,
) -> Result<TrainLog> {
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut best = params.clone();
    let mut best_ppl = phase.initial_best.unwrap_or(f64::INFINITY);
    let mut bad = 0;
    let mut lr = phase.lr;
    for epoch in 0..phase.max_epochs {
        let n = objective.begin_epoch();
        let (mut loss, mut tokens) = (0.0, 0usize);
        let (mut max_norm, mut max_clipped) = (0.0f64, 0.0f64);
        for b in 0..n {
            params.zero_grad();
            let (l, t) = objective.batch(params, b)?;
            loss += l;
            tokens += t;
            max_norm = max_norm.max(params.grad_norm());
            clip_gradients(params, phase.clip);
            max_clipped = max_clipped.max(params.grad_norm());
            phase.optimizer.step(params, lr);
        }
        let dev_ppl = objective.dev_perplexity(params)?;
        let improved = dev_ppl < best_ppl;
        let mut record = EpochRecord {
            phase: phase.name.to_owned(),
            epoch: epoch + 1,
            train_loss: if tokens > 0 { loss / tokens as f64 } else { 0.0 },
            dev_ppl,
            lr,
            improved,
            restart: !improved,
            max_grad_norm: max_norm,
            max_clipped_norm: max_clipped,
            wall_time: start.elapsed().as_secs_f64(),
        };
        if improved {
            best_ppl = dev_ppl;
            best.copy_values_from(params);
            bad = 0;
            on_improve(params, &record)?;
        } else {
            params.copy_values_from(&best);
            lr *= phase.decay;
            phase.optimizer.reset();
            bad += 1;
        }
        record.wall_time = start.elapsed().as_secs_f64();
        log.records.push(record);
        if bad >= phase.patience {
            break;
        }
    }
    params.copy_values_from(&best);
    params.zero_grad();
    Ok(log)
}

/// Adam phase followed, when enabled, by an SGD phase that starts from the
/// best Adam parameters and must beat their dev perplexity.
pub fn train_schedule<R: Real, O: Objective<R>>(
    params: &mut ParamStore<R>,
    objective: &mut O,
    cfg: &TrainConfig,
    mut on_improve: impl FnMut(&ParamStore<R>, &EpochRecord) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut log = fit(params, objective, Phase::adam(cfg), &mut on_improve)?;
    if cfg.finetune {
        log.extend(finetune_sgd(params, objective, cfg, &mut on_improve)?);
    }
    Ok(log)
}

pub fn finetune_sgd<R: Real, O: Objective<R>>(
    params: &mut ParamStore<R>,
    objective: &mut O,
    cfg: &TrainConfig,
    on_improve: impl FnMut(&ParamStore<R>, &EpochRecord) -> Result<()>,
) -> Result<TrainLog> {
    let mut phase = Phase::sgd(cfg);
    phase.initial_best = Some(objective.dev_perplexity(params)?);
    fit(params, objective, phase, on_improve)
}
