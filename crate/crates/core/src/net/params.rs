use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lstm::LstmWeights;
use crate::error::{Error, Result};

/// Number of regression outputs (SBP, DBP).
pub const OUTPUT_DIM: usize = 2;

/// Which LSTM outputs feed the dense head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    #[default]
    LastStep,
    MeanOverTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Samples per input window (8 s at 20 Hz).
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
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            input_len: 160,
            n_filters: 32,
            filter_len: 15,
            pool_size: 4,
            dropout_rate: 0.1,
            lstm_units: 64,
            lstm_layers: 2,
            readout: Readout::LastStep,
            bn_momentum: 0.99,
            bn_epsilon: 1e-3,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_len", self.input_len),
            ("n_filters", self.n_filters),
            ("filter_len", self.filter_len),
            ("pool_size", self.pool_size),
            ("lstm_units", self.lstm_units),
            ("lstm_layers", self.lstm_layers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(0.0..1.0).contains(&self.bn_momentum)
            || self.bn_epsilon.is_nan()
            || self.bn_epsilon <= 0.0
        {
            return Err(Error::Config(
                "bn_momentum must be in [0, 1) and bn_epsilon > 0".into(),
            ));
        }
        if self.input_len < self.filter_len || self.input_len < self.pool_size {
            return Err(Error::Config(format!(
                "input_len {} shorter than filter ({}) or pool ({})",
                self.input_len, self.filter_len, self.pool_size
            )));
        }
        Ok(())
    }

    /// Sequence length seen by the LSTM stack.
    pub fn pooled_len(&self) -> usize {
        self.input_len / self.pool_size
    }
}

/// Name, shape and position of one trainable tensor in the flat weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayout {
    pub w: Range<usize>,
    pub u: Range<usize>,
    pub b: Range<usize>,
    pub input_dim: usize,
}

/// Offsets of every trainable tensor, in checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub conv_w: Range<usize>,
    pub conv_b: Range<usize>,
    pub bn_gamma: Range<usize>,
    pub bn_beta: Range<usize>,
    pub lstm: Vec<LstmLayout>,
    pub dense_w: Range<usize>,
    pub dense_b: Range<usize>,
    pub tensors: Vec<TensorInfo>,
    pub total: usize,
}

impl Layout {
    pub fn new(hp: &HyperParams) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            let range = offset..offset + len;
            offset += len;
            tensors.push(TensorInfo {
                name,
                shape,
                range: range.clone(),
            });
            range
        };
        let (f, u) = (hp.n_filters, hp.lstm_units);
        let conv_w = push("conv.kernel".into(), vec![f, hp.filter_len]);
        let conv_b = push("conv.bias".into(), vec![f]);
        let bn_gamma = push("bn.gamma".into(), vec![f]);
        let bn_beta = push("bn.beta".into(), vec![f]);
        let mut lstm = Vec::new();
        for l in 0..hp.lstm_layers {
            let input_dim = if l == 0 { f } else { u };
            lstm.push(LstmLayout {
                w: push(format!("lstm{}.w_input", l + 1), vec![4 * u, input_dim]),
                u: push(format!("lstm{}.w_recurrent", l + 1), vec![4 * u, u]),
                b: push(format!("lstm{}.bias", l + 1), vec![4 * u]),
                input_dim,
            });
        }
        let dense_w = push("dense.weight".into(), vec![OUTPUT_DIM, u]);
        let dense_b = push("dense.bias".into(), vec![OUTPUT_DIM]);
        Self {
            conv_w,
            conv_b,
            bn_gamma,
            bn_beta,
            lstm,
            dense_w,
            dense_b,
            tensors,
            total: offset,
        }
    }

    /// Name of the tensor containing flat index `i`.
    pub fn name_of(&self, i: usize) -> &str {
        self.tensors
            .iter()
            .find(|t| t.range.contains(&i))
            .map(|t| t.name.as_str())
            .unwrap_or("?")
    }
}

/// All trainable weights (one flat vector) plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    hp: HyperParams,
    layout: Layout,
    pub weights: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Number of running-statistic updates applied so far.
    pub bn_updates: u64,
}

impl NetworkParams {
    /// All-zero weights, unit running variance, no statistics recorded yet.
    pub fn zeros(hp: HyperParams) -> Result<Self> {
        hp.validate()?;
        let layout = Layout::new(&hp);
        let f = hp.n_filters;
        Ok(Self {
            weights: vec![0.0; layout.total],
            running_mean: vec![0.0; f],
            running_var: vec![1.0; f],
            bn_updates: 0,
            hp,
            layout,
        })
    }

    /// Seeded initialization: LeCun-uniform conv/input/dense weights,
    /// orthogonal recurrent weights, unit forget-gate bias, `gamma = 1`.
    pub fn init(hp: HyperParams, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(hp)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = p.layout.clone();
        let u = p.hp.lstm_units;
        uniform_fill(
            &mut p.weights[layout.conv_w.clone()],
            p.hp.filter_len,
            &mut rng,
        );
        p.weights[layout.bn_gamma.clone()].fill(1.0);
        for l in &layout.lstm {
            uniform_fill(&mut p.weights[l.w.clone()], l.input_dim, &mut rng);
            let q = orthogonal(4 * u, u, &mut rng);
            p.weights[l.u.clone()].copy_from_slice(&q);
            p.weights[l.b.start + u..l.b.start + 2 * u].fill(1.0);
        }
        uniform_fill(&mut p.weights[layout.dense_w.clone()], u, &mut rng);
        Ok(p)
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hp
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn conv_kernel(&self) -> &[f64] {
        &self.weights[self.layout.conv_w.clone()]
    }

    pub fn conv_bias(&self) -> &[f64] {
        &self.weights[self.layout.conv_b.clone()]
    }

    pub fn bn_gamma(&self) -> &[f64] {
        &self.weights[self.layout.bn_gamma.clone()]
    }

    pub fn bn_beta(&self) -> &[f64] {
        &self.weights[self.layout.bn_beta.clone()]
    }

    pub fn lstm(&self, layer: usize) -> LstmWeights<'_> {
        let l = &self.layout.lstm[layer];
        LstmWeights {
            w: &self.weights[l.w.clone()],
            u: &self.weights[l.u.clone()],
            b: &self.weights[l.b.clone()],
            input_dim: l.input_dim,
            units: self.hp.lstm_units,
        }
    }

    pub fn dense_weight(&self) -> &[f64] {
        &self.weights[self.layout.dense_w.clone()]
    }

    pub fn dense_bias(&self) -> &[f64] {
        &self.weights[self.layout.dense_b.clone()]
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self
            .layout
            .tensors
            .iter()
            .find(|t| t.name == name)?
            .range
            .clone();
        Some(&mut self.weights[range])
    }

    /// Rebuilds parameters from raw parts, checking shapes.
    pub fn from_parts(
        hp: HyperParams,
        weights: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        bn_updates: u64,
    ) -> Result<Self> {
        let mut p = Self::zeros(hp)?;
        if weights.len() != p.layout.total
            || running_mean.len() != p.hp.n_filters
            || running_var.len() != p.hp.n_filters
        {
            return Err(Error::Shape(
                "parameter vector does not match hyperparameters".into(),
            ));
        }
        p.weights = weights;
        p.running_mean = running_mean;
        p.running_var = running_var;
        p.bn_updates = bn_updates;
        Ok(p)
    }
}

fn uniform_fill(buf: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let limit = (3.0 / fan_in as f64).sqrt();
    for w in buf {
        *w = rng.random_range(-limit..limit);
    }
}

/// `rows x cols` (rows >= cols) matrix with orthonormal columns, row-major.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
            out.push(q[(i, j)] * sign);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        let hp = HyperParams::default();
        let l = Layout::new(&hp);
        let lstm1 = 4 * 64 * 32 + 4 * 64 * 64 + 4 * 64;
        let lstm2 = 4 * 64 * 64 + 4 * 64 * 64 + 4 * 64;
        assert_eq!(l.total, 32 * 15 + 32 + 64 + lstm1 + lstm2 + 128 + 2);
        assert_eq!(l.name_of(0), "conv.kernel");
        assert_eq!(l.name_of(l.total - 1), "dense.bias");
        assert_eq!(hp.pooled_len(), 40);
    }

    #[test]
    fn init_is_seeded_and_orthogonal() {
        let hp = HyperParams {
            lstm_units: 5,
            n_filters: 3,
            ..HyperParams::default()
        };
        let a = NetworkParams::init(hp.clone(), 7).unwrap();
        assert_eq!(a, NetworkParams::init(hp.clone(), 7).unwrap());
        assert_ne!(a, NetworkParams::init(hp, 8).unwrap());
        let u = a.lstm(0).u;
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = (0..20).map(|r| u[r * 5 + i] * u[r * 5 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
        assert!(a.lstm(1).b[5..10].iter().all(|b| *b == 1.0));
    }

    #[test]
    fn rejects_bad_hyperparams() {
        let bad = HyperParams {
            dropout_rate: 1.0,
            ..HyperParams::default()
        };
        assert!(NetworkParams::zeros(bad).is_err());
        let bad = HyperParams {
            input_len: 10,
            ..HyperParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
