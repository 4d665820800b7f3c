//! Adam with bias-corrected first and second moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state: one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(model: &Model<T>) -> Self {
        let sizes: Vec<usize> = model.layers.iter().flat_map(|l| &l.params).map(|p| p.len()).collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from the gradients currently stored in the model.
    pub fn step(&mut self, model: &mut Model<T>, config: &AdamConfig) -> Result<()> {
        self.step += 1;
        let b1 = T::of(config.beta1);
        let b2 = T::of(config.beta2);
        let lr = T::of(config.lr);
        let eps = T::of(config.eps);
        let bc1 = T::one() - T::of(config.beta1.powi(self.step as i32));
        let bc2 = T::one() - T::of(config.beta2.powi(self.step as i32));

        let mut idx = 0usize;
        for layer in &mut model.layers {
            for param in &mut layer.params {
                let grad = param
                    .grad
                    .as_ref()
                    .ok_or_else(|| Error::ShapeMismatch("parameter has no gradient".to_string()))?;
                if grad.len() != param.data.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "gradient length {} vs parameter length {}",
                        grad.len(),
                        param.data.len()
                    )));
                }
                let m = &mut self.m[idx];
                let v = &mut self.v[idx];
                for i in 0..param.data.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (T::one() - b1) * g;
                    v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    param.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
                idx += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, ModelSpec};

    fn tiny_model() -> Model<f64> {
        let spec = ModelSpec {
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out: 2 }, LayerSpec::Softmax],
            input: (1, 3, 1),
            classes: 2,
        };
        Model::new(spec, 1).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut model = tiny_model();
        for layer in &mut model.layers {
            for p in &mut layer.params {
                p.grad_mut();
                p.zero_grad();
            }
        }
        let before: Vec<Vec<f64>> = model.layers.iter().flat_map(|l| &l.params).map(|p| p.data.clone()).collect();
        let mut adam = Adam::new(&model);
        adam.step(&mut model, &AdamConfig::default()).unwrap();
        let after: Vec<Vec<f64>> = model.layers.iter().flat_map(|l| &l.params).map(|p| p.data.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn first_step_matches_hand_trace() {
        let cfg = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut model = tiny_model();
        let g = 0.37f64;
        let theta0 = model.layers[1].params[0].data[0];
        {
            let grad = model.layers[1].params[0].grad_mut();
            grad[0] = g;
        }
        for layer in &mut model.layers {
            for p in &mut layer.params {
                p.grad_mut();
            }
        }
        let mut adam = Adam::new(&model);
        adam.step(&mut model, &cfg).unwrap();

        // five-line reference: m, v, bias corrections, update
        let m = (1.0 - 0.9) * g;
        let v = (1.0 - 0.999) * g * g;
        let m_hat = m / (1.0 - 0.9);
        let v_hat = v / (1.0 - 0.999);
        let expected = theta0 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        let got = model.layers[1].params[0].data[0];
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut model = tiny_model();
        let mut adam = Adam::new(&model);
        assert!(adam.step(&mut model, &AdamConfig::default()).is_err());
    }
}
