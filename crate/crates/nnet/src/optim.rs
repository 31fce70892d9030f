//! First-order optimizers over flat parameter lists.

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::network::{Gradients, Network};
use crate::tensor::Tensor;

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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    /// SGD with heavy-ball momentum: `v = μv + g; p -= lr·v`.
    Sgd {
        learning_rate: f64,
        momentum: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamConfig::default())
    }
}

impl OptimizerConfig {
    pub fn build(&self, shapes: &[Vec<usize>]) -> Optimizer {
        match *self {
            OptimizerConfig::Adam(config) => Optimizer::Adam(AdamState::new(config, shapes)),
            OptimizerConfig::Sgd {
                learning_rate,
                momentum,
            } => Optimizer::Sgd(SgdState {
                learning_rate,
                momentum,
                velocity: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            }),
        }
    }
}

/// Bias-corrected Adam with zero-initialized moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[Vec<usize>]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_network(config: AdamConfig, net: &Network) -> Self {
        Self::new(config, &parameter_shapes(net.parameters()))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        check_alignment(params, grads, &self.first)?;
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = 1.0 - beta1.powi(self.step as i32);
        let correction2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / correction1;
                let v_hat = *vv / correction2;
                *pv -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        let mut params: Vec<&mut Tensor> = net.parameters_mut().collect();
        self.update(&mut params, grads.tensors())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        check_alignment(params, grads, &self.velocity)?;
        for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
                *vv = self.momentum * *vv + gv;
                *pv -= self.learning_rate * *vv;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd(SgdState),
}

impl Optimizer {
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Adam(s) => s.update(params, grads),
            Optimizer::Sgd(s) => s.update(params, grads),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            Optimizer::Adam(s) => s.config.learning_rate,
            Optimizer::Sgd(s) => s.learning_rate,
        }
    }

    /// Replaces the step size; accumulated moments are kept.
    pub fn set_learning_rate(&mut self, lr: f64) {
        match self {
            Optimizer::Adam(s) => s.config.learning_rate = lr,
            Optimizer::Sgd(s) => s.learning_rate = lr,
        }
    }
}

pub fn parameter_shapes<'a>(params: impl Iterator<Item = &'a Tensor>) -> Vec<Vec<usize>> {
    params.map(|p| p.shape().to_vec()).collect()
}

fn check_alignment(params: &[&mut Tensor], grads: &[Tensor], state: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(NnError::Mismatch(format!(
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    for (i, ((p, g), s)) in params.iter().zip(grads).zip(state).enumerate() {
        if p.shape() != g.shape() || p.shape() != s.shape() {
            return Err(NnError::Mismatch(format!(
                "parameter {i}: shape {:?}, gradient {:?}, optimizer slot {:?}",
                p.shape(),
                g.shape(),
                s.shape()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adam_scalar(lr: f64) -> AdamState {
        AdamState::new(
            AdamConfig {
                learning_rate: lr,
                ..AdamConfig::default()
            },
            &[vec![1]],
        )
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::new(AdamConfig::default(), &[vec![3]]);
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let before = p.clone();
        for _ in 0..5 {
            state.update(&mut [&mut p], &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m̂ = g, v̂ = g², Δ = lr·g/(|g| + ε).
        let mut state = adam_scalar(0.001);
        let mut p = Tensor::scalar(0.0);
        state.update(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        let expected = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut state = adam_scalar(0.01);
        let mut p = Tensor::scalar(1.0);
        let mut last = 1.0;
        for _ in 0..200 {
            state.update(&mut [&mut p], &[Tensor::scalar(0.3)]).unwrap();
            assert!(p.data()[0] < last);
            last = p.data()[0];
        }
    }

    #[test]
    fn accumulators_start_at_zero_and_mismatch_is_rejected() {
        let mut state = AdamState::new(AdamConfig::default(), &[vec![2, 2]]);
        let (m, v) = state.moments();
        assert!(m[0].data().iter().chain(v[0].data()).all(|&x| x == 0.0));
        let mut p = Tensor::zeros(&[3]);
        assert!(state.update(&mut [&mut p], &[Tensor::zeros(&[3])]).is_err());
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = OptimizerConfig::Sgd {
            learning_rate: 0.1,
            momentum: 0.9,
        }
        .build(&[vec![1]]);
        let mut p = Tensor::scalar(0.0);
        opt.update(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        opt.update(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        assert!((p.data()[0] - (-0.1 - 0.19)).abs() < 1e-15);
    }
}
