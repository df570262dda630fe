//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `PPGBPCK\0`, `u32` version, hyperparameters,
//! `u64` seed, `u64` batch-norm update count, named tensors (`u16` name length,
//! UTF-8 name, `u32` rank, `u64` dims, `f64` values), then optional target
//! scaler and optional Adam state, each behind a `u8` presence flag.
//! Floats are stored as raw bits, so a round trip is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::TargetScaler;
use crate::net::{HyperParams, NetworkParams, Readout};
use crate::train::{AdamConfig, AdamState};

const MAGIC: &[u8; 8] = b"PPGBPCK\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub seed: u64,
    pub scaler: Option<TargetScaler>,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        let hp = self.params.hyper();
        for v in [
            hp.input_len,
            hp.n_filters,
            hp.filter_len,
            hp.pool_size,
            hp.lstm_units,
            hp.lstm_layers,
        ] {
            w.u64(v as u64);
        }
        w.f64s(&[hp.dropout_rate, hp.bn_momentum, hp.bn_epsilon]);
        w.u8(match hp.readout {
            Readout::LastStep => 0,
            Readout::MeanOverTime => 1,
        });
        w.u64(self.seed);
        w.u64(self.params.bn_updates);

        let layout = self.params.layout();
        let f = hp.n_filters;
        let extra = [
            ("bn.running_mean", &self.params.running_mean),
            ("bn.running_var", &self.params.running_var),
        ];
        w.u32((layout.tensors.len() + extra.len()) as u32);
        for t in &layout.tensors {
            w.tensor(&t.name, &t.shape, &self.params.weights[t.range.clone()]);
        }
        for (name, values) in extra {
            w.tensor(name, &[f], values);
        }

        match &self.scaler {
            Some(s) => {
                w.u8(1);
                w.f64s(&[s.mean_sbp, s.std_sbp, s.mean_dbp, s.std_dbp]);
            }
            None => w.u8(0),
        }
        match &self.adam {
            Some(a) => {
                w.u8(1);
                let c = a.config;
                w.f64s(&[c.learning_rate, c.beta1, c.beta2, c.epsilon]);
                w.u64(a.step);
                w.u64(a.m.len() as u64);
                w.f64s(&a.m);
                w.f64s(&a.v);
            }
            None => w.u8(0),
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u64()? as usize;
        }
        let [dropout_rate, bn_momentum, bn_epsilon] = [r.f64()?, r.f64()?, r.f64()?];
        let readout = match r.u8()? {
            0 => Readout::LastStep,
            1 => Readout::MeanOverTime,
            x => return Err(Error::Checkpoint(format!("unknown readout tag {x}"))),
        };
        let hp = HyperParams {
            input_len: dims[0],
            n_filters: dims[1],
            filter_len: dims[2],
            pool_size: dims[3],
            lstm_units: dims[4],
            lstm_layers: dims[5],
            dropout_rate,
            readout,
            bn_momentum,
            bn_epsilon,
        };
        hp.validate()
            .map_err(|e| Error::Checkpoint(format!("invalid hyperparameters: {e}")))?;
        let seed = r.u64()?;
        let bn_updates = r.u64()?;

        let mut params = NetworkParams::zeros(hp)?;
        let expected: Vec<(String, Vec<usize>)> = params
            .layout()
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.shape.clone()))
            .chain(
                ["bn.running_mean", "bn.running_var"]
                    .map(|n| (n.to_string(), vec![params.hyper().n_filters])),
            )
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        let mut weights = Vec::with_capacity(params.weights.len());
        let mut running = Vec::new();
        for (name, shape) in &expected {
            let (got_name, got_shape, values) = r.tensor()?;
            if &got_name != name || &got_shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {got_name} {got_shape:?} where {name} {shape:?} was expected"
                )));
            }
            if name.starts_with("bn.running") {
                running.push(values);
            } else {
                weights.extend(values);
            }
        }
        let running_var = running.pop().unwrap_or_default();
        let running_mean = running.pop().unwrap_or_default();
        params = NetworkParams::from_parts(
            params.hyper().clone(),
            weights,
            running_mean,
            running_var,
            bn_updates,
        )?;

        let scaler = match r.u8()? {
            0 => None,
            1 => {
                let v = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
                Some(TargetScaler {
                    mean_sbp: v[0],
                    std_sbp: v[1],
                    mean_dbp: v[2],
                    std_dbp: v[3],
                })
            }
            x => return Err(Error::Checkpoint(format!("bad scaler flag {x}"))),
        };
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let config = AdamConfig {
                    learning_rate: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    epsilon: r.f64()?,
                };
                let step = r.u64()?;
                let n = r.u64()? as usize;
                if n != params.weights.len() {
                    return Err(Error::Checkpoint(
                        "optimizer state does not match parameter count".into(),
                    ));
                }
                let m = r.f64s(n)?;
                let v = r.f64s(n)?;
                Some(AdamState { config, m, v, step })
            }
            x => return Err(Error::Checkpoint(format!("bad optimizer flag {x}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            params,
            seed,
            scaler,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    fn tensor(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        self.0.extend_from_slice(&(name.len() as u16).to_le_bytes());
        self.0.extend_from_slice(name.as_bytes());
        self.u32(shape.len() as u32);
        for &d in shape {
            self.u64(d as u64);
        }
        self.f64s(values);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let len = self.u16()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = self.u32()? as usize;
        let shape = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let values = self.f64s(shape.iter().product())?;
        Ok((name, shape, values))
    }
}
