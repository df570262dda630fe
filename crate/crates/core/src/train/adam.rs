use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates and step count for every trainable weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &[f64]) -> Result<()> {
        if grads.len() != params.weights.len() || self.m.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.weights.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(
                params.layout().name_of(i).to_string(),
            ));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((w, g), m), v) in params
            .weights
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::HyperParams;

    fn params() -> NetworkParams {
        let hp = HyperParams {
            input_len: 8,
            n_filters: 1,
            filter_len: 3,
            lstm_units: 2,
            lstm_layers: 1,
            ..HyperParams::default()
        };
        NetworkParams::init(hp, 1).unwrap()
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = params();
        let before = p.weights.clone();
        let mut adam = AdamState::new(AdamConfig::default(), p.weights.len());
        adam.step(&mut p, &vec![1.0; before.len()]).unwrap();
        let expected = 1e-3 / (1.0 + 1e-8);
        for (a, b) in before.iter().zip(&p.weights) {
            assert!(((a - b) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params();
        let before = p.weights.clone();
        let mut adam = AdamState::new(AdamConfig::default(), before.len());
        adam.step(&mut p, &vec![0.0; before.len()]).unwrap();
        assert_eq!(before, p.weights);
    }

    #[test]
    fn constant_positive_gradient_decreases_monotonically() {
        let mut p = params();
        let n = p.weights.len();
        let mut adam = AdamState::new(AdamConfig::default(), n);
        let w0 = p.weights.clone();
        adam.step(&mut p, &vec![0.3; n]).unwrap();
        let w1 = p.weights.clone();
        adam.step(&mut p, &vec![0.3; n]).unwrap();
        for i in 0..n {
            assert!(w1[i] < w0[i] && p.weights[i] < w1[i]);
        }
        assert!(adam.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = params();
        let n = p.weights.len();
        let before = p.weights.clone();
        let mut g = vec![0.1; n];
        g[n - 1] = f64::NAN;
        let mut adam = AdamState::new(AdamConfig::default(), n);
        match adam.step(&mut p, &g) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "dense.bias"),
            other => panic!("{other:?}"),
        }
        assert_eq!(adam.step, 0);
        assert_eq!(p.weights, before);
    }
}
