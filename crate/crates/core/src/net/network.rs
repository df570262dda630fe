//! Composed network: conv -> ReLU -> batch norm -> max-pool -> dropout ->
//! stacked LSTM -> dense head on the chosen readout.
//!
//! Batch norm couples the samples of a mini-batch, so forward and backward
//! run in three stages: per-sample work before batch norm, the batch-norm
//! reduction, and per-sample work after it. Per-sample stages fan out
//! through [`Execution`]; every reduction runs in sample order.

use rand::Rng;

use super::activation::{relu, relu_backward};
use super::batchnorm::{
    batch_stats, batchnorm_backward, batchnorm_infer, batchnorm_train, update_running, BatchStats,
    BnCache,
};
use super::conv::{conv1d_backward_into, conv1d_forward};
use super::dense::{dense_backward, dense_forward};
use super::dropout::{dropout, dropout_mask};
use super::lstm::{lstm_backward_into, lstm_forward, LstmCache};
use super::params::{HyperParams, NetworkParams, Readout, OUTPUT_DIM};
use super::pool::{maxpool_backward, maxpool_forward};
use crate::error::{Error, Result};
use crate::exec::Execution;

pub type Output = [f64; OUTPUT_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, optional dropout masks, trace recorded.
    Train,
    /// Running statistics, no dropout, no trace.
    Infer,
}

#[derive(Debug, Clone)]
pub struct SampleTrace {
    input: Vec<f64>,
    conv_pre: Vec<f64>,
    pool_argmax: Vec<usize>,
    mask: Option<Vec<f64>>,
    lstm_inputs: Vec<Vec<f64>>,
    lstm: Vec<LstmCache>,
    readout: Vec<f64>,
}

/// Everything a train-mode forward pass caches for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    samples: Vec<SampleTrace>,
    bn: BnCache,
    pub bn_stats: BatchStats,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.samples.len()
    }

    pub fn masks(&self) -> Vec<Option<Vec<f64>>> {
        self.samples.iter().map(|s| s.mask.clone()).collect()
    }
}

pub struct BatchOutput {
    pub outputs: Vec<Output>,
    pub trace: Option<ForwardTrace>,
}

/// Draws one dropout mask per sample, or `None` when the rate is zero.
pub fn sample_masks<R: Rng + ?Sized>(
    hp: &HyperParams,
    batch: usize,
    rng: &mut R,
) -> Option<Vec<Vec<f64>>> {
    if hp.dropout_rate <= 0.0 {
        return None;
    }
    let len = hp.pooled_len() * hp.n_filters;
    Some(
        (0..batch)
            .map(|_| dropout_mask(len, hp.dropout_rate, rng))
            .collect(),
    )
}

fn check_input(hp: &HyperParams, x: &[f64]) -> Result<()> {
    if x.len() != hp.input_len {
        return Err(Error::Shape(format!(
            "input window has {} samples, network expects {}",
            x.len(),
            hp.input_len
        )));
    }
    Ok(())
}

/// Runs the post-batch-norm part of the network for one sample.
fn tail_forward(
    params: &NetworkParams,
    bn_out: &[f64],
    mask: Option<&[f64]>,
) -> Result<(Output, SampleTrace)> {
    let hp = params.hyper();
    let f = hp.n_filters;
    let (pooled, argmax) = maxpool_forward(bn_out, f, hp.pool_size)?;
    let mut seq = dropout(&pooled, mask);
    let mut lstm_inputs = Vec::with_capacity(hp.lstm_layers);
    let mut caches = Vec::with_capacity(hp.lstm_layers);
    for l in 0..hp.lstm_layers {
        let cache = lstm_forward(&seq, params.lstm(l), &format!("lstm{}", l + 1))?;
        let next = cache.hidden().to_vec();
        lstm_inputs.push(std::mem::replace(&mut seq, next));
        caches.push(cache);
    }
    let u = hp.lstm_units;
    let steps = seq.len() / u;
    let readout = match hp.readout {
        Readout::LastStep => seq[(steps - 1) * u..].to_vec(),
        Readout::MeanOverTime => {
            let mut m = vec![0.0; u];
            for row in seq.chunks_exact(u) {
                m.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            m.iter_mut().for_each(|a| *a /= steps as f64);
            m
        }
    };
    let y = dense_forward(&readout, params.dense_weight(), params.dense_bias())?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericStep {
            layer: "dense".into(),
            step: 0,
        });
    }
    let trace = SampleTrace {
        input: Vec::new(),
        conv_pre: Vec::new(),
        pool_argmax: argmax,
        mask: mask.map(<[f64]>::to_vec),
        lstm_inputs,
        lstm: caches,
        readout,
    };
    Ok(([y[0], y[1]], trace))
}

/// Forward pass over a mini-batch.
///
/// In [`Mode::Train`] `masks` supplies one dropout mask per sample (`None`
/// disables dropout) and the returned trace carries the batch statistics;
/// running statistics are not touched here (see [`apply_running_update`]).
pub fn forward_batch(
    params: &NetworkParams,
    inputs: &[&[f64]],
    mode: Mode,
    masks: Option<&[Vec<f64>]>,
    exec: Execution,
) -> Result<BatchOutput> {
    let hp = params.hyper();
    if inputs.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    for x in inputs {
        check_input(hp, x)?;
    }
    if let Some(m) = masks {
        let len = hp.pooled_len() * hp.n_filters;
        if m.len() != inputs.len() || m.iter().any(|v| v.len() != len) {
            return Err(Error::Shape("dropout masks do not match the batch".into()));
        }
    }
    let conv = exec.map(inputs, |x| {
        conv1d_forward(x, params.conv_kernel(), params.conv_bias())
    });
    let conv_pre = conv.into_iter().collect::<Result<Vec<_>>>()?;
    let activated: Vec<Vec<f64>> = exec.map(&conv_pre, |c| relu(c));

    match mode {
        Mode::Infer => {
            if params.bn_updates == 0 {
                return Err(Error::UninitializedStats);
            }
            let outs = exec.map(&activated, |a| {
                let bn = batchnorm_infer(
                    a,
                    params.bn_gamma(),
                    params.bn_beta(),
                    &params.running_mean,
                    &params.running_var,
                    hp.bn_epsilon,
                );
                tail_forward(params, &bn, None).map(|(y, _)| y)
            });
            Ok(BatchOutput {
                outputs: outs.into_iter().collect::<Result<_>>()?,
                trace: None,
            })
        }
        Mode::Train => {
            let (bn_out, stats, cache) = batchnorm_train(
                &activated,
                params.bn_gamma(),
                params.bn_beta(),
                hp.bn_epsilon,
                exec,
            )?;
            let idx: Vec<usize> = (0..inputs.len()).collect();
            let tails = exec.map(&idx, |&b| {
                tail_forward(params, &bn_out[b], masks.map(|m| m[b].as_slice()))
            });
            let mut outputs = Vec::with_capacity(inputs.len());
            let mut samples = Vec::with_capacity(inputs.len());
            for ((res, x), pre) in tails.into_iter().zip(inputs).zip(conv_pre) {
                let (y, mut t) = res?;
                t.input = x.to_vec();
                t.conv_pre = pre;
                outputs.push(y);
                samples.push(t);
            }
            Ok(BatchOutput {
                outputs,
                trace: Some(ForwardTrace {
                    samples,
                    bn: cache,
                    bn_stats: stats,
                }),
            })
        }
    }
}

/// Batch-norm input statistics over `inputs` taken as one batch.
pub fn activation_stats(
    params: &NetworkParams,
    inputs: &[&[f64]],
    exec: Execution,
) -> Result<BatchStats> {
    let hp = params.hyper();
    for x in inputs {
        check_input(hp, x)?;
    }
    let activated = exec.map(inputs, |x| {
        conv1d_forward(x, params.conv_kernel(), params.conv_bias()).map(|c| relu(&c))
    });
    let activated = activated.into_iter().collect::<Result<Vec<_>>>()?;
    batch_stats(&activated, hp.n_filters, exec)
}

/// Folds a train-mode batch's statistics into the running estimates.
pub fn apply_running_update(params: &mut NetworkParams, trace: &ForwardTrace) {
    let momentum = params.hyper().bn_momentum;
    update_running(
        &mut params.running_mean,
        &mut params.running_var,
        &trace.bn_stats,
        momentum,
    );
    params.bn_updates += 1;
}

/// Single-window forward pass. Train mode draws a dropout mask from `rng`
/// and returns the trace; infer mode consumes no randomness.
pub fn network_forward<R: Rng + ?Sized>(
    window: &[f64],
    params: &NetworkParams,
    mode: Mode,
    rng: &mut R,
) -> Result<(Output, Option<ForwardTrace>)> {
    let masks = match mode {
        Mode::Train => sample_masks(params.hyper(), 1, rng),
        Mode::Infer => None,
    };
    let out = forward_batch(
        params,
        &[window],
        mode,
        masks.as_deref(),
        Execution::Sequential,
    )?;
    Ok((out.outputs[0], out.trace))
}

/// Gradient of `sum_b <output_grads[b], y_b>` with respect to every
/// trainable weight, laid out like [`NetworkParams::weights`].
pub fn network_backward(
    params: &NetworkParams,
    trace: Option<&ForwardTrace>,
    output_grads: &[Output],
    exec: Execution,
) -> Result<Vec<f64>> {
    let trace =
        trace.ok_or_else(|| Error::Protocol("backward pass without a train-mode trace".into()))?;
    if output_grads.len() != trace.samples.len() {
        return Err(Error::Shape(format!(
            "{} output gradients for a batch of {}",
            output_grads.len(),
            trace.samples.len()
        )));
    }
    let hp = params.hyper();
    let layout = params.layout();
    let (f, u) = (hp.n_filters, hp.lstm_units);
    let idx: Vec<usize> = (0..output_grads.len()).collect();

    // Stage A: dense, LSTM stack, dropout and pooling, per sample.
    let stage_a = exec.map(&idx, |&b| {
        let s = &trace.samples[b];
        let mut grad = vec![0.0; layout.total];
        let dense = dense_backward(&s.readout, params.dense_weight(), &output_grads[b]);
        grad[layout.dense_w.clone()].copy_from_slice(&dense.w);
        grad[layout.dense_b.clone()].copy_from_slice(&dense.b);
        let steps = hp.pooled_len();
        let mut grad_h = vec![0.0; steps * u];
        match hp.readout {
            Readout::LastStep => grad_h[(steps - 1) * u..].copy_from_slice(&dense.input),
            Readout::MeanOverTime => {
                for row in grad_h.chunks_exact_mut(u) {
                    row.iter_mut()
                        .zip(&dense.input)
                        .for_each(|(g, d)| *g = d / steps as f64);
                }
            }
        }
        for l in (0..hp.lstm_layers).rev() {
            let ll = &layout.lstm[l];
            let seq = &s.lstm_inputs[l];
            let mut dx = vec![0.0; seq.len()];
            let (head, rest) = grad.split_at_mut(ll.u.start);
            let (du, rest) = rest.split_at_mut(ll.u.len());
            let db = &mut rest[..ll.b.len()];
            let dw = &mut head[ll.w.clone()];
            lstm_backward_into(
                seq,
                params.lstm(l),
                &s.lstm[l],
                &grad_h,
                dw,
                du,
                db,
                &mut dx,
            );
            grad_h = dx;
        }
        let d_pooled = match &s.mask {
            Some(m) => grad_h.iter().zip(m).map(|(g, k)| g * k).collect(),
            None => grad_h,
        };
        let d_bn = maxpool_backward(&s.pool_argmax, f, hp.input_len, &d_pooled);
        (grad, d_bn)
    });
    let (partials, d_bn): (Vec<Vec<f64>>, Vec<Vec<f64>>) = stage_a.into_iter().unzip();

    // Stage B: batch-norm reduction.
    let bn = batchnorm_backward(&trace.bn, params.bn_gamma(), &d_bn, exec);

    // Stage C: ReLU and convolution, per sample.
    let conv_parts = exec.map(&idx, |&b| {
        let s = &trace.samples[b];
        let d_pre = relu_backward(&s.conv_pre, &bn.input[b]);
        let mut dk = vec![0.0; layout.conv_w.len()];
        let mut dc = vec![0.0; layout.conv_b.len()];
        conv1d_backward_into(
            &s.input,
            params.conv_kernel(),
            f,
            &d_pre,
            &mut dk,
            &mut dc,
            None,
        );
        (dk, dc)
    });

    let mut grad = vec![0.0; layout.total];
    for p in &partials {
        grad.iter_mut().zip(p).for_each(|(g, v)| *g += v);
    }
    for (dk, dc) in &conv_parts {
        grad[layout.conv_w.clone()]
            .iter_mut()
            .zip(dk)
            .for_each(|(g, v)| *g += v);
        grad[layout.conv_b.clone()]
            .iter_mut()
            .zip(dc)
            .for_each(|(g, v)| *g += v);
    }
    grad[layout.bn_gamma.clone()].copy_from_slice(&bn.gamma);
    grad[layout.bn_beta.clone()].copy_from_slice(&bn.beta);
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> HyperParams {
        HyperParams {
            input_len: 16,
            n_filters: 2,
            filter_len: 5,
            pool_size: 4,
            dropout_rate: 0.0,
            lstm_units: 3,
            lstm_layers: 2,
            ..HyperParams::default()
        }
    }

    fn window(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_params_output_dense_bias() {
        let mut p = NetworkParams::zeros(tiny()).unwrap();
        p.tensor_mut("dense.bias")
            .unwrap()
            .copy_from_slice(&[1.5, -0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, trace) = network_forward(&window(1, 16), &p, Mode::Train, &mut rng).unwrap();
        assert_eq!(y, [1.5, -0.5]);
        assert!(trace.is_some());
    }

    #[test]
    fn infer_is_pure_and_requires_stats() {
        let mut p = NetworkParams::init(tiny(), 3).unwrap();
        let x = window(2, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            network_forward(&x, &p, Mode::Infer, &mut rng),
            Err(Error::UninitializedStats)
        ));
        let (_, trace) = network_forward(&x, &p, Mode::Train, &mut rng).unwrap();
        apply_running_update(&mut p, trace.as_ref().unwrap());
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let a = network_forward(&x, &p, Mode::Infer, &mut r1).unwrap().0;
        let b = network_forward(&x, &p, Mode::Infer, &mut r1).unwrap().0;
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        assert_eq!(
            r1.random::<u64>(),
            ChaCha8Rng::seed_from_u64(9).random::<u64>()
        );
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let p = NetworkParams::init(HyperParams::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            network_forward(&vec![0.0; 159], &p, Mode::Train, &mut rng),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_needs_trace() {
        let p = NetworkParams::init(tiny(), 1).unwrap();
        assert!(matches!(
            network_backward(&p, None, &[[1.0, 0.0]], Execution::Sequential),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let p = NetworkParams::init(tiny(), 4).unwrap();
        let xs = [window(5, 16), window(6, 16)];
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let out = forward_batch(&p, &refs, Mode::Train, None, Execution::Sequential).unwrap();
        let g = network_backward(
            &p,
            out.trace.as_ref(),
            &[[0.0; 2]; 2],
            Execution::Sequential,
        )
        .unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let p = NetworkParams::init(tiny(), 8).unwrap();
        let x = window(9, 16);
        let og = [0.7, -1.3];
        let single = forward_batch(&p, &[&x], Mode::Train, None, Execution::Sequential).unwrap();
        let g1 = network_backward(&p, single.trace.as_ref(), &[og], Execution::Sequential).unwrap();
        let double =
            forward_batch(&p, &[&x, &x], Mode::Train, None, Execution::Sequential).unwrap();
        let g2 =
            network_backward(&p, double.trace.as_ref(), &[og, og], Execution::Sequential).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let hp = HyperParams {
            dropout_rate: 0.1,
            ..tiny()
        };
        let p = NetworkParams::init(hp.clone(), 10).unwrap();
        let xs: Vec<Vec<f64>> = (0..7).map(|s| window(s, 16)).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let masks = sample_masks(&hp, 7, &mut ChaCha8Rng::seed_from_u64(1));
        let og: Vec<Output> = (0..7).map(|i| [i as f64 * 0.1, -0.2]).collect();
        let run = |exec| {
            let out = forward_batch(&p, &refs, Mode::Train, masks.as_deref(), exec).unwrap();
            network_backward(&p, out.trace.as_ref(), &og, exec).unwrap()
        };
        let a = run(Execution::Sequential);
        let b = run(Execution::Parallel);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
