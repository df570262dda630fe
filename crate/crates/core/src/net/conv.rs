//! Single-input-channel 1-D cross-correlation with 'same' zero padding.

use crate::error::{Error, Result};

/// `out[t*F + f] = bias[f] + sum_j kernel[f*K + j] * input[t + j - K/2]`,
/// out-of-range input treated as zero.
pub fn conv1d_forward(input: &[f64], kernel: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    let t_len = input.len();
    let filters = bias.len();
    if t_len == 0 || filters == 0 || !kernel.len().is_multiple_of(filters) {
        return Err(Error::Shape(format!(
            "conv: input {t_len}, kernel {}, bias {filters}",
            kernel.len()
        )));
    }
    let k = kernel.len() / filters;
    let half = k / 2;
    let mut out = vec![0.0; t_len * filters];
    for t in 0..t_len {
        // taps j with 0 <= t + j - half < T
        let j_lo = half.saturating_sub(t);
        let j_hi = (t_len + half - t).min(k);
        let row = &mut out[t * filters..(t + 1) * filters];
        for (f, o) in row.iter_mut().enumerate() {
            let w = &kernel[f * k..(f + 1) * k];
            let mut acc = bias[f];
            for j in j_lo..j_hi {
                acc += w[j] * input[t + j - half];
            }
            *o = acc;
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn conv1d_backward(
    input: &[f64],
    kernel: &[f64],
    filters: usize,
    grad_out: &[f64],
) -> ConvGrads {
    let mut g = ConvGrads {
        kernel: vec![0.0; kernel.len()],
        bias: vec![0.0; filters],
        input: vec![0.0; input.len()],
    };
    conv1d_backward_into(
        input,
        kernel,
        filters,
        grad_out,
        &mut g.kernel,
        &mut g.bias,
        Some(&mut g.input),
    );
    g
}

/// Accumulates kernel and bias gradients into the given buffers.
pub(crate) fn conv1d_backward_into(
    input: &[f64],
    kernel: &[f64],
    filters: usize,
    grad_out: &[f64],
    dkernel: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let t_len = input.len();
    let k = kernel.len() / filters;
    let half = k / 2;
    for t in 0..t_len {
        let j_lo = half.saturating_sub(t);
        let j_hi = (t_len + half - t).min(k);
        let g_row = &grad_out[t * filters..(t + 1) * filters];
        for (f, &g) in g_row.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            dbias[f] += g;
            let dw = &mut dkernel[f * k..(f + 1) * k];
            for j in j_lo..j_hi {
                dw[j] += g * input[t + j - half];
            }
            if let Some(dx) = dinput.as_deref_mut() {
                let w = &kernel[f * k..(f + 1) * k];
                for j in j_lo..j_hi {
                    dx[t + j - half] += g * w[j];
                }
            }
        }
    }
}
