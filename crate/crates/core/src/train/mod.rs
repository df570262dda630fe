//! Mini-batch Adam training on normalized (SBP, DBP) targets.

mod adam;
mod loss;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use loss::mse_loss;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::eval::TargetScaler;
use crate::exec::Execution;
use crate::net::{
    activation_stats, apply_running_update, forward_batch, network_backward, sample_masks,
    HyperParams, Mode, NetworkParams, Output,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without a > `min_delta` improvement in training loss before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub adam: AdamConfig,
    /// Also record the epoch loss with dropout off (costs one extra forward pass per epoch).
    pub track_clean_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            epochs: 200,
            seed: 0,
            patience: 20,
            min_delta: 1e-5,
            adam: AdamConfig::default(),
            track_clean_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.epsilon > 0.0)
        {
            return Err(Error::Config("invalid Adam settings".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss with dropout active.
    pub loss: f64,
    /// Loss over the training set with dropout disabled, if tracked.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_loss: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessKind {
    Train,
    Predict,
}

/// Records which windows were read (input or label), per fold.
///
/// Used to prove that excluded windows are never touched during training.
#[derive(Debug, Default)]
pub struct AccessProbe {
    counts: Mutex<BTreeMap<(usize, usize, AccessKind), usize>>,
}

impl AccessProbe {
    pub fn record(&self, fold: usize, window: usize, kind: AccessKind) {
        let mut counts = self.counts.lock().unwrap_or_else(|e| e.into_inner());
        *counts.entry((fold, window, kind)).or_default() += 1;
    }

    /// `(fold, window index, kind) -> number of reads`.
    pub fn snapshot(&self) -> BTreeMap<(usize, usize, AccessKind), usize> {
        self.counts
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

/// Tags probe records with the fold they belong to.
#[derive(Debug, Clone, Copy)]
pub struct ProbeHandle<'a> {
    pub probe: &'a AccessProbe,
    pub fold: usize,
}

impl ProbeHandle<'_> {
    pub fn touch(&self, window: usize, kind: AccessKind) {
        self.probe.record(self.fold, window, kind);
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions<'a> {
    /// Target normalization. When absent it is fit on the training windows.
    pub scaler: Option<&'a TargetScaler>,
    pub probe: Option<ProbeHandle<'a>>,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub adam: AdamState,
    pub scaler: TargetScaler,
    pub log: Vec<EpochRecord>,
}

/// Trains a fresh network on every window whose index is not in `exclude`.
pub fn train_subject(
    windows: &[WindowSample],
    exclude: &BTreeSet<usize>,
    hp: &HyperParams,
    config: &TrainConfig,
    opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let usable: Vec<&WindowSample> = windows
        .iter()
        .filter(|w| !exclude.contains(&w.index))
        .collect();
    if usable.is_empty() || usable.len() < config.batch_size {
        return Err(Error::InsufficientData(format!(
            "{} training windows after exclusion, batch size is {}",
            usable.len(),
            config.batch_size
        )));
    }
    let touch = |w: &WindowSample| {
        if let Some(p) = opts.probe {
            p.touch(w.index, AccessKind::Train);
        }
    };
    let scaler = match opts.scaler {
        Some(s) => *s,
        None => {
            usable.iter().for_each(|w| touch(w));
            TargetScaler::fit(usable.iter().copied())?
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = NetworkParams::init(hp.clone(), rng.next_u64())?;
    let mut adam = AdamState::new(config.adam, params.weights.len());
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut log = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| usable[i]).collect();
            batch.iter().for_each(|w| touch(w));
            let inputs: Vec<&[f64]> = batch.iter().map(|w| w.input.as_slice()).collect();
            let targets: Vec<Output> = batch
                .iter()
                .map(|w| scaler.normalize(w.sbp, w.dbp))
                .collect();
            let masks = sample_masks(hp, batch.len(), &mut rng);
            let out = forward_batch(&params, &inputs, Mode::Train, masks.as_deref(), opts.exec)?;
            let n = batch.len() as f64;
            let mut loss = 0.0;
            let grads_out: Vec<Output> = out
                .outputs
                .iter()
                .zip(&targets)
                .map(|(p, t)| {
                    let (l, g) = mse_loss(p, t);
                    loss += l;
                    [g[0] / n, g[1] / n]
                })
                .collect();
            let trace = out.trace.as_ref();
            let grads = network_backward(&params, trace, &grads_out, opts.exec)?;
            adam.step(&mut params, &grads)?;
            if let Some(t) = trace {
                apply_running_update(&mut params, t);
            }
            total += loss / n;
            batches += 1;
        }
        let loss = total / batches as f64;
        let clean_loss = if config.track_clean_loss {
            Some(clean_loss(
                &params,
                &usable,
                &scaler,
                config.batch_size,
                opts,
            )?)
        } else {
            None
        };
        log.push(EpochRecord {
            epoch,
            loss,
            clean_loss,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if !loss.is_finite() {
            return Err(Error::NumericStep {
                layer: "loss".into(),
                step: epoch,
            });
        }
        if loss < best - config.min_delta {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params,
        adam,
        scaler,
        log,
    })
}

/// Training-set loss with dropout off and batch norm using statistics of
/// the whole training set, evaluated in chunks of `batch_size` samples.
fn clean_loss(
    params: &NetworkParams,
    usable: &[&WindowSample],
    scaler: &TargetScaler,
    batch_size: usize,
    opts: TrainOptions<'_>,
) -> Result<f64> {
    if let Some(p) = opts.probe {
        usable
            .iter()
            .for_each(|w| p.touch(w.index, AccessKind::Train));
    }
    let inputs: Vec<&[f64]> = usable.iter().map(|w| w.input.as_slice()).collect();
    let stats = activation_stats(params, &inputs, opts.exec)?;
    let mut frozen = params.clone();
    frozen.running_mean = stats.mean;
    frozen.running_var = stats.var;
    frozen.bn_updates = frozen.bn_updates.max(1);
    let mut total = 0.0;
    for (chunk, ws) in inputs.chunks(batch_size).zip(usable.chunks(batch_size)) {
        let out = forward_batch(&frozen, chunk, Mode::Infer, None, opts.exec)?;
        for (p, w) in out.outputs.iter().zip(ws) {
            total += mse_loss(p, &scaler.normalize(w.sbp, w.dbp)).0;
        }
    }
    Ok(total / usable.len() as f64)
}

/// Predicts (SBP, DBP) in mmHg for one window with a trained model.
pub fn predict(params: &NetworkParams, scaler: &TargetScaler, input: &[f64]) -> Result<(f64, f64)> {
    let out = forward_batch(params, &[input], Mode::Infer, None, Execution::Sequential)?;
    Ok(scaler.denormalize(out.outputs[0]))
}
