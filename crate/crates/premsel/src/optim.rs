//! AdamW with decoupled weight decay, and the warmup–cosine learning-rate
//! schedule used by the training loop.

use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("expected {expected} gradients, got {got}")]
    MissingGradient { expected: usize, got: usize },
    #[error("gradient {index} has {got} elements, parameter has {expected}")]
    GradientShape {
        index: usize,
        expected: usize,
        got: usize,
    },
}

/// Optimizer hyperparameters. The defaults are the training setup's values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 1e-2,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment buffers plus the shared step counter.
pub struct OptimizerState<E: Scalar> {
    pub config: AdamWConfig,
    first_moment: Vec<Vec<E>>,
    second_moment: Vec<Vec<E>>,
    pub step: u64,
}

impl<E: Scalar> OptimizerState<E> {
    pub fn new(config: AdamWConfig, params: &[Tensor<E>]) -> Self {
        OptimizerState {
            config,
            first_moment: params.iter().map(|p| vec![E::zero(); p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![E::zero(); p.len()]).collect(),
            step: 0,
        }
    }
}

/// One AdamW update. Returns fresh leaf tensors in the same order as `params`.
///
/// Weight decay is decoupled: parameters shrink by `lr · λ · p` independently
/// of the adaptive update, and the moment estimates are bias-corrected.
pub fn adamw_step<E: Scalar>(
    params: &[Tensor<E>],
    grads: &[Vec<E>],
    state: &mut OptimizerState<E>,
    lr: f64,
) -> Result<Vec<Tensor<E>>, OptimError> {
    if grads.len() != params.len() {
        return Err(OptimError::MissingGradient {
            expected: params.len(),
            got: grads.len(),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(OptimError::GradientShape {
                index: i,
                expected: p.len(),
                got: g.len(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = E::from_f64(state.config.beta1);
    let b2 = E::from_f64(state.config.beta2);
    let eps = E::from_f64(state.config.eps);
    let lr_e = E::from_f64(lr);
    let decay = E::from_f64(lr * state.config.weight_decay);
    let bias1 = E::one() - b1.powi(t);
    let bias2 = E::one() - b2.powi(t);

    let mut updated = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        let mut data = p.to_vec();
        for j in 0..data.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (E::one() - b1) * gj;
            v[j] = b2 * v[j] + (E::one() - b2) * gj * gj;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            data[j] = data[j] - lr_e * m_hat / (v_hat.sqrt() + eps) - decay * data[j];
        }
        updated.push(Tensor::param(p.dims().to_vec(), data));
    }
    Ok(updated)
}

/// Learning-rate schedule: linear warmup to the peak, then cosine decay to
/// the floor over the remaining epochs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LrSchedule {
    pub warmup_epochs: f64,
    pub total_epochs: f64,
    pub peak: f64,
    pub floor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            warmup_epochs: 3.0,
            total_epochs: 100.0,
            peak: 5e-4,
            floor: 1e-8,
        }
    }
}

impl LrSchedule {
    /// The learning rate at a (possibly fractional) epoch in `[0, total]`.
    pub fn at(&self, epoch: f64) -> f64 {
        let epoch = epoch.clamp(0.0, self.total_epochs);
        if epoch <= self.warmup_epochs {
            if self.warmup_epochs == 0.0 {
                return self.peak;
            }
            return self.peak * epoch / self.warmup_epochs;
        }
        let span = self.total_epochs - self.warmup_epochs;
        let t = (epoch - self.warmup_epochs) / span;
        self.floor + 0.5 * (self.peak - self.floor) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::default();
        assert_eq!(s.at(0.0), 0.0);
        assert!((s.at(3.0) - 5e-4).abs() < 1e-12);
        assert!((s.at(100.0) - 1e-8).abs() < 1e-12);
        // Halfway through the cosine span the rate is the midpoint.
        let mid = s.at(3.0 + 48.5);
        assert!((mid - (5e-4 + 1e-8) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let p = Tensor::<f64>::param([3], vec![1.0, -2.0, 3.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = OptimizerState::new(cfg, std::slice::from_ref(&p));
        let out = adamw_step(
            std::slice::from_ref(&p),
            &[vec![0.0; 3]],
            &mut state,
            0.1,
        )
        .unwrap();
        assert_eq!(out[0].data(), p.data());
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // g = 1, lr = 0.1, λ = 0: m̂ = v̂ = 1, so the update is −lr/(1 + ε) ≈ −0.1.
        let p = Tensor::<f64>::param([1], vec![0.0]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut state = OptimizerState::new(cfg, std::slice::from_ref(&p));
        let out = adamw_step(std::slice::from_ref(&p), &[vec![1.0]], &mut state, 0.1).unwrap();
        assert!((out[0].data()[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay_multiplier() {
        // λ = 1e-2 at lr = 5e-4 shrinks weights by 1 − 5e-6 per step.
        let p = Tensor::<f64>::param([1], vec![1.0]);
        let mut state = OptimizerState::new(AdamWConfig::default(), std::slice::from_ref(&p));
        let out = adamw_step(std::slice::from_ref(&p), &[vec![0.0]], &mut state, 5e-4).unwrap();
        assert!((out[0].data()[0] - (1.0 - 5e-6)).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let p = Tensor::<f64>::param([1], vec![1.0]);
        let mut state = OptimizerState::new(AdamWConfig::default(), std::slice::from_ref(&p));
        assert!(adamw_step(std::slice::from_ref(&p), &[], &mut state, 0.1).is_err());
    }
}
