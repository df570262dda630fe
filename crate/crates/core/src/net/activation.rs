/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Gradient through ReLU given the pre-activation values.
pub fn relu_backward(pre: &[f64], grad_out: &[f64]) -> Vec<f64> {
    pre.iter()
        .zip(grad_out)
        .map(|(p, g)| if *p > 0.0 { *g } else { 0.0 })
        .collect()
}

/// Piecewise-linear gate activation `clamp(0.2 x + 0.5, 0, 1)`.
#[inline]
pub fn hard_sigmoid(x: f64) -> f64 {
    (0.2 * x + 0.5).clamp(0.0, 1.0)
}

#[inline]
pub fn hard_sigmoid_grad(x: f64) -> f64 {
    if (-2.5..=2.5).contains(&x) {
        0.2
    } else {
        0.0
    }
}
