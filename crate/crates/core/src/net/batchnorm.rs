//! Per-channel batch normalization over the batch and time axes.
//!
//! Sequences are time-major `T x C` buffers. Batch statistics are reduced
//! from per-sample partial sums in sample order.

use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Population variance over batch and time.
    pub var: Vec<f64>,
    /// Number of elements per channel the statistics were computed over.
    pub count: usize,
}

/// Cached values needed by [`batchnorm_backward`].
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Vec<Vec<f64>>,
    pub inv_std: Vec<f64>,
}

pub fn batch_stats(batch: &[Vec<f64>], channels: usize, exec: Execution) -> Result<BatchStats> {
    let count: usize = batch.iter().map(|s| s.len() / channels).sum();
    if count < 2 {
        return Err(Error::Shape(format!(
            "batch norm in train mode needs at least 2 values per channel, got {count}"
        )));
    }
    let sums = exec.map(batch, |s| {
        let mut acc = vec![0.0; channels];
        for row in s.chunks_exact(channels) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        acc
    });
    let mut mean = vec![0.0; channels];
    for s in &sums {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let sq = exec.map(batch, |s| {
        let mut acc = vec![0.0; channels];
        for row in s.chunks_exact(channels) {
            for ((a, x), m) in acc.iter_mut().zip(row).zip(&mean) {
                *a += (x - m) * (x - m);
            }
        }
        acc
    });
    let mut var = vec![0.0; channels];
    for s in &sq {
        for (v, x) in var.iter_mut().zip(s) {
            *v += x;
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    Ok(BatchStats { mean, var, count })
}

/// Normalizes with batch statistics, returning outputs and the backward cache.
pub fn batchnorm_train(
    batch: &[Vec<f64>],
    gamma: &[f64],
    beta: &[f64],
    epsilon: f64,
    exec: Execution,
) -> Result<(Vec<Vec<f64>>, BatchStats, BnCache)> {
    let channels = gamma.len();
    let stats = batch_stats(batch, channels, exec)?;
    let inv_std: Vec<f64> = stats
        .var
        .iter()
        .map(|v| 1.0 / (v + epsilon).sqrt())
        .collect();
    let pairs = exec.map(batch, |s| {
        let mut x_hat = Vec::with_capacity(s.len());
        let mut y = Vec::with_capacity(s.len());
        for row in s.chunks_exact(channels) {
            for (c, x) in row.iter().enumerate() {
                let xh = (x - stats.mean[c]) * inv_std[c];
                x_hat.push(xh);
                y.push(gamma[c] * xh + beta[c]);
            }
        }
        (y, x_hat)
    });
    let (ys, x_hat) = pairs.into_iter().unzip();
    Ok((ys, stats, BnCache { x_hat, inv_std }))
}

/// Normalizes one sequence with running statistics.
pub fn batchnorm_infer(
    seq: &[f64],
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    epsilon: f64,
) -> Vec<f64> {
    let channels = gamma.len();
    let scale: Vec<f64> = (0..channels)
        .map(|c| gamma[c] / (running_var[c] + epsilon).sqrt())
        .collect();
    let mut out = Vec::with_capacity(seq.len());
    for row in seq.chunks_exact(channels) {
        for (c, x) in row.iter().enumerate() {
            out.push((x - running_mean[c]) * scale[c] + beta[c]);
        }
    }
    out
}

/// Exponential moving update of running statistics. Variance is stored
/// with the unbiased `n/(n-1)` correction.
pub fn update_running(
    running_mean: &mut [f64],
    running_var: &mut [f64],
    stats: &BatchStats,
    momentum: f64,
) {
    let n = stats.count as f64;
    let correction = n / (n - 1.0);
    for c in 0..running_mean.len() {
        running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * stats.mean[c];
        running_var[c] = momentum * running_var[c] + (1.0 - momentum) * stats.var[c] * correction;
    }
}

pub struct BnGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub input: Vec<Vec<f64>>,
}

pub fn batchnorm_backward(
    cache: &BnCache,
    gamma: &[f64],
    grad_out: &[Vec<f64>],
    exec: Execution,
) -> BnGrads {
    let channels = gamma.len();
    let idx: Vec<usize> = (0..grad_out.len()).collect();
    let partials = exec.map(&idx, |&b| {
        let mut dg = vec![0.0; channels];
        let mut db = vec![0.0; channels];
        for (g_row, x_row) in grad_out[b]
            .chunks_exact(channels)
            .zip(cache.x_hat[b].chunks_exact(channels))
        {
            for c in 0..channels {
                dg[c] += g_row[c] * x_row[c];
                db[c] += g_row[c];
            }
        }
        (dg, db)
    });
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for (dg, db) in &partials {
        for c in 0..channels {
            dgamma[c] += dg[c];
            dbeta[c] += db[c];
        }
    }
    let count: usize = grad_out.iter().map(|g| g.len() / channels).sum();
    let n = count as f64;
    let input = exec.map(&idx, |&b| {
        let mut dx = Vec::with_capacity(grad_out[b].len());
        for (g_row, x_row) in grad_out[b]
            .chunks_exact(channels)
            .zip(cache.x_hat[b].chunks_exact(channels))
        {
            for c in 0..channels {
                let mean_dy = dbeta[c] / n;
                let mean_dy_xh = dgamma[c] / n;
                dx.push(gamma[c] * cache.inv_std[c] * (g_row[c] - mean_dy - x_row[c] * mean_dy_xh));
            }
        }
        dx
    });
    BnGrads {
        gamma: dgamma,
        beta: dbeta,
        input,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::mean_var;

    fn batch() -> Vec<Vec<f64>> {
        (0..3)
            .map(|b| {
                (0..10 * 2)
                    .map(|i| ((i * 7 + b * 5) % 13) as f64 * 0.7 - 2.0 + b as f64)
                    .collect()
            })
            .collect()
    }

    fn channel(batch: &[Vec<f64>], c: usize) -> Vec<f64> {
        batch
            .iter()
            .flat_map(|s| s.chunks(2).map(move |r| r[c]))
            .collect()
    }

    #[test]
    fn train_mode_standardizes() {
        let (y, _, _) = batchnorm_train(
            &batch(),
            &[1.0, 1.0],
            &[0.0, 0.0],
            0.0,
            Execution::Sequential,
        )
        .unwrap();
        for c in 0..2 {
            let (m, v) = mean_var(&channel(&y, c));
            assert!(m.abs() <= 1e-7);
            assert!((v - 1.0).abs() <= 1e-5);
        }
        let (y, _, _) = batchnorm_train(
            &batch(),
            &[2.0, 2.0],
            &[3.0, 3.0],
            0.0,
            Execution::Sequential,
        )
        .unwrap();
        for c in 0..2 {
            let (m, v) = mean_var(&channel(&y, c));
            assert!((m - 3.0).abs() <= 1e-5);
            assert!((v.sqrt() - 2.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn infer_with_unit_stats_is_near_identity() {
        let x = vec![0.5, -1.0, 2.0, 3.0];
        let eps = 1e-3;
        let y = batchnorm_infer(&x, &[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], eps);
        for (a, b) in x.iter().zip(&y) {
            assert!((a / (1.0 + eps).sqrt() - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_value_per_channel_is_rejected() {
        assert!(batch_stats(&[vec![1.0, 2.0]], 2, Execution::Sequential).is_err());
    }

    #[test]
    fn running_update() {
        let stats = BatchStats {
            mean: vec![1.0],
            var: vec![2.0],
            count: 5,
        };
        let (mut m, mut v) = (vec![0.0], vec![1.0]);
        update_running(&mut m, &mut v, &stats, 0.9);
        assert!((m[0] - 0.1).abs() < 1e-15);
        assert!((v[0] - (0.9 + 0.1 * 2.5)).abs() < 1e-15);
    }
}
