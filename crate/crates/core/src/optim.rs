//! Adam with coupled L2 weight decay per parameter group.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::tape::TensorError;

/// Weight-decay group of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Graph convolution weights.
    Conv,
    /// Input projection and output classifier.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub group: ParamGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay_conv: f64,
    pub weight_decay_dense: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay_conv: 0.0,
            weight_decay_dense: 0.0,
        }
    }
}

impl AdamConfig {
    fn decay(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Conv => self.weight_decay_conv,
            ParamGroup::Dense => self.weight_decay_dense,
        }
    }
}

/// Optimizer state: first and second moments per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Adam update. `grads[i]` belongs to `params[i]`.
    ///
    /// The group's decay `λ` enters as `g + λ θ` before the moment update,
    /// then the bias-corrected step is applied.
    pub fn step(&mut self, params: &mut [Param], grads: &[Option<&Matrix>]) -> Result<(), TensorError> {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        for (index, g) in grads.iter().enumerate() {
            match g {
                None => return Err(TensorError::MissingGradient { index }),
                Some(g) if g.shape() != params[index].value.shape() => {
                    return Err(TensorError::ShapeMismatch {
                        op: "adam_step",
                        left: params[index].value.shape(),
                        right: g.shape(),
                    })
                }
                _ => {}
            }
        }
        if grads.len() != params.len() {
            return Err(TensorError::MissingGradient { index: grads.len() });
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - libm::pow(c.beta1, t);
        let bias2 = 1.0 - libm::pow(c.beta2, t);
        let step_size = c.learning_rate / bias1;
        let bias2_sqrt = libm::sqrt(bias2);

        for (i, param) in params.iter_mut().enumerate() {
            let grad = grads[i].expect("checked above");
            let decay = c.decay(param.group);
            let theta = param.value.as_mut_slice();
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            for k in 0..theta.len() {
                let g = grad.as_slice()[k] + decay * theta[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                let denom = libm::sqrt(v[k]) / bias2_sqrt + c.epsilon;
                theta[k] -= step_size * m[k] / denom;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn scalar(value: f64, group: ParamGroup) -> Param {
        Param {
            name: "w".to_string(),
            value: Matrix::filled(1, 1, value),
            group,
        }
    }

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut params = vec![scalar(1.5, ParamGroup::Conv), scalar(-2.0, ParamGroup::Dense)];
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let g = Matrix::zeros(1, 1);
        adam.step(&mut params, &[Some(&g), Some(&g)]).unwrap();
        assert_eq!(params, before);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g = 1 and v̂ = g² = 1, so the step is lr / (1 + ε).
        let mut params = vec![scalar(0.0, ParamGroup::Dense)];
        let config = AdamConfig::default();
        let mut adam = Adam::new(config, &params);
        let g = Matrix::filled(1, 1, 1.0);
        adam.step(&mut params, &[Some(&g)]).unwrap();
        let want = -config.learning_rate / (1.0 + config.epsilon);
        assert!((params[0].value.get(0, 0) - want).abs() < 1e-17);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut params = vec![scalar(1.0, ParamGroup::Conv)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let g = Matrix::filled(1, 1, 1.0);
        let mut last = 1.0;
        // Scalar simulation of the same recurrence.
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            adam.step(&mut params, &[Some(&g)]).unwrap();
            let now = params[0].value.get(0, 0);
            assert!(now < last);
            last = now;
            m = 0.9 * m + 0.1;
            v = 0.999 * v + 0.001;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.01 * mh / (vh.sqrt() + 1e-8);
            assert!((now - theta).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_is_coupled_per_group() {
        let mut params = vec![scalar(2.0, ParamGroup::Conv), scalar(2.0, ParamGroup::Dense)];
        let config = AdamConfig {
            weight_decay_conv: 0.5,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(config, &params);
        let g = Matrix::zeros(1, 1);
        adam.step(&mut params, &[Some(&g), Some(&g)]).unwrap();
        assert!(params[0].value.get(0, 0) < 2.0);
        assert_eq!(params[1].value.get(0, 0), 2.0);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut params = vec![scalar(0.0, ParamGroup::Conv)];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        assert_eq!(
            adam.step(&mut params, &[None]),
            Err(TensorError::MissingGradient { index: 0 })
        );
        assert_eq!(adam.steps_taken(), 0);
    }
}
