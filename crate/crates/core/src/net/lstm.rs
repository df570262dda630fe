//! LSTM layer with hard-sigmoid gates and tanh cell/output activations.
//!
//! Gate blocks in the stacked weight matrices are ordered input, forget,
//! cell candidate, output (each `units` rows).

use super::activation::{hard_sigmoid, hard_sigmoid_grad};
use super::linalg::{axpy, matvec, matvec_t_acc, outer_acc};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    /// `4U x I` input weights.
    pub w: &'a [f64],
    /// `4U x U` recurrent weights.
    pub u: &'a [f64],
    /// `4U` bias.
    pub b: &'a [f64],
    pub input_dim: usize,
    pub units: usize,
}

/// Per-step values cached by the forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// `T x 4U` gate pre-activations.
    pub z: Vec<f64>,
    /// `T x 4U` activated gates (i, f, g, o).
    pub gates: Vec<f64>,
    /// `(T+1) x U` cell states, row 0 is the initial state.
    pub c: Vec<f64>,
    /// `T x U` tanh of the cell state.
    pub tanh_c: Vec<f64>,
    /// `(T+1) x U` hidden states, row 0 is the initial state.
    pub h: Vec<f64>,
    pub units: usize,
}

impl LstmCache {
    /// `T x U` hidden outputs.
    pub fn hidden(&self) -> &[f64] {
        &self.h[self.units..]
    }

    pub fn steps(&self) -> usize {
        self.tanh_c.len() / self.units
    }
}

/// Runs the recurrence from zero initial state over a `T x I` sequence and
/// returns the cache; the hidden sequence is `cache.h[U..]`.
pub fn lstm_forward(seq: &[f64], p: LstmWeights<'_>, layer: &str) -> Result<LstmCache> {
    let (i_dim, u) = (p.input_dim, p.units);
    if !seq.len().is_multiple_of(i_dim)
        || p.w.len() != 4 * u * i_dim
        || p.u.len() != 4 * u * u
        || p.b.len() != 4 * u
    {
        return Err(Error::Shape(format!("{layer}: inconsistent LSTM shapes")));
    }
    let steps = seq.len() / i_dim;
    let mut cache = LstmCache {
        z: vec![0.0; steps * 4 * u],
        gates: vec![0.0; steps * 4 * u],
        c: vec![0.0; (steps + 1) * u],
        tanh_c: vec![0.0; steps * u],
        h: vec![0.0; (steps + 1) * u],
        units: u,
    };
    let mut rec = vec![0.0; 4 * u];
    for t in 0..steps {
        let x_t = &seq[t * i_dim..(t + 1) * i_dim];
        let z = &mut cache.z[t * 4 * u..(t + 1) * 4 * u];
        matvec(p.w, x_t, z);
        matvec(p.u, &cache.h[t * u..(t + 1) * u], &mut rec);
        for ((zi, ri), bi) in z.iter_mut().zip(&rec).zip(p.b) {
            *zi += ri + bi;
        }
        let gates = &mut cache.gates[t * 4 * u..(t + 1) * 4 * u];
        for k in 0..4 * u {
            gates[k] = if (2 * u..3 * u).contains(&k) {
                z[k].tanh()
            } else {
                hard_sigmoid(z[k])
            };
        }
        let (prev, next) = cache.c.split_at_mut((t + 1) * u);
        let c_prev = &prev[t * u..];
        let c_t = &mut next[..u];
        for k in 0..u {
            c_t[k] = gates[u + k] * c_prev[k] + gates[k] * gates[2 * u + k];
            let tc = c_t[k].tanh();
            cache.tanh_c[t * u + k] = tc;
            cache.h[(t + 1) * u + k] = gates[3 * u + k] * tc;
        }
        if !cache.h[(t + 1) * u..(t + 2) * u]
            .iter()
            .all(|v| v.is_finite())
            || !c_t.iter().all(|v| v.is_finite())
        {
            return Err(Error::NumericStep {
                layer: layer.to_string(),
                step: t,
            });
        }
    }
    Ok(cache)
}

pub struct LstmGrads {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub input: Vec<f64>,
}

/// Backpropagation through time. `grad_h` is `T x U`, the loss gradient
/// flowing into each hidden output from above.
pub fn lstm_backward(
    seq: &[f64],
    p: LstmWeights<'_>,
    cache: &LstmCache,
    grad_h: &[f64],
) -> LstmGrads {
    let mut g = LstmGrads {
        w: vec![0.0; p.w.len()],
        u: vec![0.0; p.u.len()],
        b: vec![0.0; p.b.len()],
        input: vec![0.0; seq.len()],
    };
    lstm_backward_into(
        seq,
        p,
        cache,
        grad_h,
        &mut g.w,
        &mut g.u,
        &mut g.b,
        &mut g.input,
    );
    g
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward_into(
    seq: &[f64],
    p: LstmWeights<'_>,
    cache: &LstmCache,
    grad_h: &[f64],
    dw: &mut [f64],
    du: &mut [f64],
    db: &mut [f64],
    dx: &mut [f64],
) {
    let (i_dim, u) = (p.input_dim, p.units);
    let steps = seq.len() / i_dim;
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * 4 * u..(t + 1) * 4 * u];
        let z = &cache.z[t * 4 * u..(t + 1) * 4 * u];
        let c_prev = &cache.c[t * u..(t + 1) * u];
        let tanh_c = &cache.tanh_c[t * u..(t + 1) * u];
        for k in 0..u {
            let dh = grad_h[t * u + k] + dh_next[k];
            let (gi, gf, gg, go) = (gates[k], gates[u + k], gates[2 * u + k], gates[3 * u + k]);
            let d_o = dh * tanh_c[k];
            let dc = dh * go * (1.0 - tanh_c[k] * tanh_c[k]) + dc_next[k];
            dz[k] = dc * gg * hard_sigmoid_grad(z[k]);
            dz[u + k] = dc * c_prev[k] * hard_sigmoid_grad(z[u + k]);
            dz[2 * u + k] = dc * gi * (1.0 - gg * gg);
            dz[3 * u + k] = d_o * hard_sigmoid_grad(z[3 * u + k]);
            dc_next[k] = dc * gf;
        }
        let x_t = &seq[t * i_dim..(t + 1) * i_dim];
        let h_prev = &cache.h[t * u..(t + 1) * u];
        outer_acc(&dz, x_t, dw);
        outer_acc(&dz, h_prev, du);
        axpy(1.0, &dz, db);
        matvec_t_acc(p.w, &dz, &mut dx[t * i_dim..(t + 1) * i_dim]);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(p.u, &dz, &mut dh_next);
    }
}
