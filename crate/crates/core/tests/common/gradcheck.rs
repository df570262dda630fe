//! Central finite-difference checks for every layer and the composed network.

use ppgbp::exec::Execution;
use ppgbp::net::activation::relu_backward;
use ppgbp::net::batchnorm::{batchnorm_backward, batchnorm_train};
use ppgbp::net::conv::{conv1d_backward, conv1d_forward};
use ppgbp::net::dense::{dense_backward, dense_forward};
use ppgbp::net::dropout::{dropout, dropout_mask};
use ppgbp::net::lstm::{lstm_backward, lstm_forward, LstmWeights};
use ppgbp::net::pool::{maxpool_backward, maxpool_forward};
use ppgbp::net::{
    forward_batch, network_backward, relu, HyperParams, Mode, NetworkParams, Readout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Floor for gradients that are zero up to rounding.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares `analytic` against central differences of `f` around `x`.
pub fn compare(name: &str, x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Check {
    assert_eq!(x.len(), analytic.len(), "{name}: gradient length");
    let mut check = Check {
        name: name.to_string(),
        checked: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
    };
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let up = f(&probe);
        probe[i] = x[i] - STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * STEP);
        let ga = analytic[i];
        let diff = (ga - numeric).abs();
        let scale = ga.abs() + numeric.abs();
        if scale > 0.0 {
            check.worst_rel = check.worst_rel.max(diff / scale);
        }
        if diff > REL_TOL * scale + ABS_FLOOR {
            check.failures.push(format!(
                "{name}[{i}]: analytic {ga:.9e} numeric {numeric:.9e}"
            ));
        }
        check.checked += 1;
    }
    check
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn weighted(y: &[f64], r: &[f64]) -> f64 {
    y.iter().zip(r).map(|(a, b)| a * b).sum()
}

pub fn conv(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, f, k) = (16, 2, 15);
    let x = rand_vec(&mut rng, t, 1.0);
    let w = rand_vec(&mut rng, f * k, 0.5);
    let b = rand_vec(&mut rng, f, 0.5);
    let r = rand_vec(&mut rng, t * f, 1.0);
    let g = conv1d_backward(&x, &w, f, &r);
    vec![
        compare("conv.input", &x, &g.input, |x| {
            weighted(&conv1d_forward(x, &w, &b).unwrap(), &r)
        }),
        compare("conv.kernel", &w, &g.kernel, |w| {
            weighted(&conv1d_forward(&x, w, &b).unwrap(), &r)
        }),
        compare("conv.bias", &b, &g.bias, |b| {
            weighted(&conv1d_forward(&x, &w, b).unwrap(), &r)
        }),
    ]
}

pub fn relu_layer(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep inputs away from the kink at zero
    let x: Vec<f64> = rand_vec(&mut rng, 20, 1.0)
        .into_iter()
        .map(|v| v + 0.01f64.copysign(v))
        .collect();
    let r = rand_vec(&mut rng, 20, 1.0);
    vec![compare("relu.input", &x, &relu_backward(&x, &r), |x| {
        weighted(&relu(x), &r)
    })]
}

pub fn batchnorm(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, t, c) = (3, 4, 2);
    let xs: Vec<Vec<f64>> = (0..batch).map(|_| rand_vec(&mut rng, t * c, 2.0)).collect();
    let gamma = rand_vec(&mut rng, c, 1.5);
    let beta = rand_vec(&mut rng, c, 1.0);
    let rs: Vec<Vec<f64>> = (0..batch).map(|_| rand_vec(&mut rng, t * c, 1.0)).collect();
    let loss = |xs: &[Vec<f64>], gamma: &[f64], beta: &[f64]| {
        let (ys, _, _) = batchnorm_train(xs, gamma, beta, 1e-3, Execution::Sequential).unwrap();
        ys.iter().zip(&rs).map(|(y, r)| weighted(y, r)).sum::<f64>()
    };
    let (_, _, cache) = batchnorm_train(&xs, &gamma, &beta, 1e-3, Execution::Sequential).unwrap();
    let g = batchnorm_backward(&cache, &gamma, &rs, Execution::Sequential);
    let flat: Vec<f64> = xs.concat();
    let unflat = |v: &[f64]| v.chunks(t * c).map(<[f64]>::to_vec).collect::<Vec<_>>();
    vec![
        compare("bn.input", &flat, &g.input.concat(), |v| {
            loss(&unflat(v), &gamma, &beta)
        }),
        compare("bn.gamma", &gamma, &g.gamma, |v| loss(&xs, v, &beta)),
        compare("bn.beta", &beta, &g.beta, |v| loss(&xs, &gamma, v)),
    ]
}

pub fn maxpool(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, c, p) = (16, 3, 4);
    let x = rand_vec(&mut rng, t * c, 1.0);
    let r = rand_vec(&mut rng, t / p * c, 1.0);
    let (_, argmax) = maxpool_forward(&x, c, p).unwrap();
    let g = maxpool_backward(&argmax, c, t, &r);
    vec![compare("maxpool.input", &x, &g, |x| {
        weighted(&maxpool_forward(x, c, p).unwrap().0, &r)
    })]
}

pub fn dropout_layer(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_vec(&mut rng, 24, 1.0);
    let r = rand_vec(&mut rng, 24, 1.0);
    let mask = dropout_mask(24, 0.1, &mut rng);
    let analytic: Vec<f64> = r.iter().zip(&mask).map(|(a, m)| a * m).collect();
    vec![compare("dropout.input", &x, &analytic, |x| {
        weighted(&dropout(x, Some(&mask)), &r)
    })]
}

pub fn lstm(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, i, u) = (5, 3, 4);
    let x = rand_vec(&mut rng, t * i, 1.0);
    let w = rand_vec(&mut rng, 4 * u * i, 0.6);
    let uu = rand_vec(&mut rng, 4 * u * u, 0.6);
    let b = rand_vec(&mut rng, 4 * u, 0.3);
    let r = rand_vec(&mut rng, t * u, 1.0);
    let run = |x: &[f64], w: &[f64], uu: &[f64], b: &[f64]| {
        let p = LstmWeights {
            w,
            u: uu,
            b,
            input_dim: i,
            units: u,
        };
        weighted(lstm_forward(x, p, "lstm").unwrap().hidden(), &r)
    };
    let p = LstmWeights {
        w: &w,
        u: &uu,
        b: &b,
        input_dim: i,
        units: u,
    };
    let cache = lstm_forward(&x, p, "lstm").unwrap();
    let g = lstm_backward(&x, p, &cache, &r);
    vec![
        compare("lstm.input", &x, &g.input, |v| run(v, &w, &uu, &b)),
        compare("lstm.w_input", &w, &g.w, |v| run(&x, v, &uu, &b)),
        compare("lstm.w_recurrent", &uu, &g.u, |v| run(&x, &w, v, &b)),
        compare("lstm.bias", &b, &g.b, |v| run(&x, &w, &uu, v)),
    ]
}

pub fn dense(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rand_vec(&mut rng, 5, 1.0);
    let w = rand_vec(&mut rng, 10, 1.0);
    let b = rand_vec(&mut rng, 2, 1.0);
    let r = rand_vec(&mut rng, 2, 1.0);
    let g = dense_backward(&h, &w, &r);
    vec![
        compare("dense.input", &h, &g.input, |v| {
            weighted(&dense_forward(v, &w, &b).unwrap(), &r)
        }),
        compare("dense.weight", &w, &g.w, |v| {
            weighted(&dense_forward(&h, v, &b).unwrap(), &r)
        }),
        compare("dense.bias", &b, &g.b, |v| {
            weighted(&dense_forward(&h, &w, v).unwrap(), &r)
        }),
    ]
}

pub fn tiny_hyper(readout: Readout) -> HyperParams {
    HyperParams {
        input_len: 16,
        n_filters: 2,
        filter_len: 15,
        pool_size: 4,
        dropout_rate: 0.1,
        lstm_units: 3,
        lstm_layers: 2,
        readout,
        ..HyperParams::default()
    }
}

/// Whole network in train mode on a batch of three, with fixed dropout masks.
/// One check per named tensor.
pub fn network(seed: u64, readout: Readout) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hp = tiny_hyper(readout);
    let mut params = NetworkParams::init(hp.clone(), rng.random()).unwrap();
    // non-trivial batch-norm affine parameters
    for v in params.tensor_mut("bn.gamma").unwrap() {
        *v = rng.random_range(0.5..1.5);
    }
    for v in params.tensor_mut("bn.beta").unwrap() {
        *v = rng.random_range(-0.5..0.5);
    }
    let inputs: Vec<Vec<f64>> = (0..3)
        .map(|_| rand_vec(&mut rng, hp.input_len, 1.5))
        .collect();
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let masks = ppgbp::net::sample_masks(&hp, 3, &mut rng);
    let r: Vec<[f64; 2]> = (0..3)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let loss = |p: &NetworkParams| {
        let out = forward_batch(
            p,
            &refs,
            Mode::Train,
            masks.as_deref(),
            Execution::Sequential,
        )
        .unwrap();
        out.outputs
            .iter()
            .zip(&r)
            .map(|(y, r)| y[0] * r[0] + y[1] * r[1])
            .sum::<f64>()
    };
    let out = forward_batch(
        &params,
        &refs,
        Mode::Train,
        masks.as_deref(),
        Execution::Sequential,
    )
    .unwrap();
    let grads = network_backward(&params, out.trace.as_ref(), &r, Execution::Sequential).unwrap();
    let tensors = params.layout().tensors.clone();
    let mut probe = params.clone();
    tensors
        .iter()
        .map(|t| {
            let x = params.weights[t.range.clone()].to_vec();
            let check = compare(
                &format!("network.{}", t.name),
                &x,
                &grads[t.range.clone()],
                |v| {
                    probe.weights[t.range.clone()].copy_from_slice(v);
                    loss(&probe)
                },
            );
            probe.weights[t.range.clone()].copy_from_slice(&x);
            check
        })
        .collect()
}

/// Every check in the suite.
pub fn all(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.extend(conv(seed));
    checks.extend(relu_layer(seed + 1));
    checks.extend(batchnorm(seed + 2));
    checks.extend(maxpool(seed + 3));
    checks.extend(dropout_layer(seed + 4));
    checks.extend(lstm(seed + 5));
    checks.extend(dense(seed + 6));
    checks.extend(network(seed + 7, Readout::LastStep));
    checks.extend(network(seed + 8, Readout::MeanOverTime));
    checks
}
