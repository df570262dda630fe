//! Flat run configuration, loadable from TOML and written into every output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalConfig, FoldMode, ModelKind};
use crate::exec::Execution;
use crate::net::{HyperParams, Readout};
use crate::train::{AdamConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<String>,
    pub out: Option<String>,
    pub seed: u64,

    pub fold_mode: FoldMode,
    pub folds: usize,
    pub exclusion_radius: usize,
    pub paper_faithful: bool,
    pub model: ModelKind,
    /// Worker threads; 0 lets the thread pool decide.
    pub jobs: usize,
    pub execution: Execution,
    /// Alignment search range for `preprocess`, seconds.
    pub max_lag_s: f64,

    pub input_len: usize,
    pub n_filters: usize,
    pub filter_len: usize,
    pub pool_size: usize,
    pub dropout_rate: f64,
    pub lstm_units: usize,
    pub lstm_layers: usize,
    pub readout: Readout,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,

    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub track_clean_loss: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        let tc = TrainConfig::default();
        Self {
            input: None,
            out: None,
            seed: tc.seed,
            fold_mode: FoldMode::Lowo,
            folds: 10,
            exclusion_radius: 3,
            paper_faithful: false,
            model: ModelKind::Net,
            jobs: 0,
            execution: Execution::Parallel,
            max_lag_s: 2.0,
            input_len: hp.input_len,
            n_filters: hp.n_filters,
            filter_len: hp.filter_len,
            pool_size: hp.pool_size,
            dropout_rate: hp.dropout_rate,
            lstm_units: hp.lstm_units,
            lstm_layers: hp.lstm_layers,
            readout: hp.readout,
            bn_momentum: hp.bn_momentum,
            bn_epsilon: hp.bn_epsilon,
            batch_size: tc.batch_size,
            epochs: tc.epochs,
            patience: tc.patience,
            min_delta: tc.min_delta,
            learning_rate: tc.adam.learning_rate,
            beta1: tc.adam.beta1,
            beta2: tc.adam.beta2,
            epsilon: tc.adam.epsilon,
            track_clean_loss: tc.track_clean_loss,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        self.train().validate()?;
        if !(self.max_lag_s >= 0.0 && self.max_lag_s.is_finite()) {
            return Err(Error::Config(
                "max_lag_s must be a finite non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn hyper(&self) -> HyperParams {
        HyperParams {
            input_len: self.input_len,
            n_filters: self.n_filters,
            filter_len: self.filter_len,
            pool_size: self.pool_size,
            dropout_rate: self.dropout_rate,
            lstm_units: self.lstm_units,
            lstm_layers: self.lstm_layers,
            readout: self.readout,
            bn_momentum: self.bn_momentum,
            bn_epsilon: self.bn_epsilon,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            patience: self.patience,
            min_delta: self.min_delta,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            track_clean_loss: self.track_clean_loss,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            mode: self.fold_mode,
            folds: self.folds,
            exclusion_radius: self.exclusion_radius,
            paper_faithful: self.paper_faithful,
            model: self.model,
            hp: self.hyper(),
            train: self.train(),
            exec: self.execution,
            keep_models: self.model == ModelKind::Net,
        }
    }
}
