use crate::net::Output;

/// Mean squared error over the two outputs and its gradient `(pred - target)`.
pub fn mse_loss(pred: &Output, target: &Output) -> (f64, Output) {
    let d = [pred[0] - target[0], pred[1] - target[1]];
    ((d[0] * d[0] + d[1] * d[1]) / 2.0, d)
}
