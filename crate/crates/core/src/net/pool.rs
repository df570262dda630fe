use crate::error::{Error, Result};

/// Non-overlapping max pool along time for a `T x C` sequence. Returns the
/// pooled `floor(T/p) x C` sequence and, for each output, the time index of
/// the winning input (first occurrence on ties). Trailing rows are dropped.
pub fn maxpool_forward(
    seq: &[f64],
    channels: usize,
    pool: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let t_len = seq.len() / channels;
    if pool == 0 || t_len < pool {
        return Err(Error::Shape(format!(
            "max-pool of size {pool} over {t_len} steps"
        )));
    }
    let out_len = t_len / pool;
    let mut out = Vec::with_capacity(out_len * channels);
    let mut arg = Vec::with_capacity(out_len * channels);
    for block in 0..out_len {
        for c in 0..channels {
            let mut best_t = block * pool;
            let mut best = seq[best_t * channels + c];
            for t in block * pool + 1..(block + 1) * pool {
                let v = seq[t * channels + c];
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            out.push(best);
            arg.push(best_t);
        }
    }
    Ok((out, arg))
}

pub fn maxpool_backward(
    argmax: &[usize],
    channels: usize,
    input_len: usize,
    grad_out: &[f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; input_len * channels];
    for (i, (&t, g)) in argmax.iter().zip(grad_out).enumerate() {
        dx[t * channels + i % channels] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let (out, arg) = maxpool_forward(&[1.0, 5.0, 2.0, 3.0, 7.0, 0.0, 0.0, 1.0], 1, 4).unwrap();
        assert_eq!(out, vec![5.0, 7.0]);
        assert_eq!(arg, vec![1, 4]);
        let (out, _) = maxpool_forward(&vec![0.0; 160 * 3], 3, 4).unwrap();
        assert_eq!(out.len() / 3, 40);
        let (out, arg) = maxpool_forward(&[2.0; 9], 1, 4).unwrap();
        assert_eq!(out, vec![2.0, 2.0]);
        assert_eq!(arg, vec![0, 4]);
        assert!(maxpool_forward(&[1.0, 2.0, 3.0], 1, 4).is_err());
    }

    proptest! {
        #[test]
        fn output_is_block_max(xs in prop::collection::vec(-10f64..10.0, 8..64)) {
            let channels = 2;
            let t = xs.len() / channels;
            prop_assume!(t >= 4);
            let seq = &xs[..t * channels];
            let (out, arg) = maxpool_forward(seq, channels, 4).unwrap();
            for (i, (&v, &a)) in out.iter().zip(&arg).enumerate() {
                let (block, c) = (i / channels, i % channels);
                let max = (block * 4..block * 4 + 4).map(|s| seq[s * channels + c]).fold(f64::MIN, f64::max);
                prop_assert_eq!(v, max);
                prop_assert_eq!(seq[a * channels + c], v);
            }
        }
    }
}
