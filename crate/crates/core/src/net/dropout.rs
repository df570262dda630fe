use rand::Rng;

/// Draws an inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1/(1-rate)`. A zero rate consumes no randomness.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

/// Applies a mask (training) or passes through (inference, `mask == None`).
pub fn dropout(x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => x.to_vec(),
    }
}
