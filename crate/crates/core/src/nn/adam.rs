use alloc::vec::Vec;

use super::{NnError, Tensor};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale all gradients together so their global L2 norm is at most this value.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Bias-corrected Adam over a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update and returns the global gradient norm before clipping.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<f64, NnError> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(NnError::ShapeMismatch {
                op: "adam_step",
                left: alloc::vec![self.first.len()],
                right: alloc::vec![params.len(), grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        let norm = math::sqrt(grads.iter().map(Tensor::sq_norm).sum());
        let clip = match self.config.max_grad_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.t += 1;
        let AdamConfig {
            lr, beta1, beta2, eps, ..
        } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(t));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            let (pd, gd) = (p.data_mut(), g.data());
            for i in 0..pd.len() {
                let gi = gd[i] * clip;
                let mi = &mut m.data_mut()[i];
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                let vi = &mut v.data_mut()[i];
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                pd[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unclipped() -> AdamConfig {
        AdamConfig {
            max_grad_norm: None,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default(), &params);
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_hand_evaluation() {
        let g = [0.3, -2.0, 1e-3];
        let mut params = vec![Tensor::vector(vec![0.0; 3])];
        let mut adam = Adam::new(unclipped(), &params);
        adam.step(&mut params, &[Tensor::vector(g.to_vec())]).unwrap();
        for (p, gi) in params[0].data().iter().zip(g) {
            // t = 1: m̂ = g, v̂ = g², so Δ = -lr·g / (|g| + ε).
            let want = -3e-4 * gi / (libm::fabs(gi) + 1e-8);
            assert!((p - want).abs() < 1e-18, "{p} vs {want}");
        }
    }

    #[test]
    fn clipping_matches_prescaled_gradients() {
        let raw = vec![Tensor::vector(vec![6.0, 0.0]), Tensor::vector(vec![0.0, 8.0])];
        // global norm 10
        let scaled: Vec<Tensor> = raw
            .iter()
            .map(|t| Tensor::vector(t.data().iter().map(|v| v * 0.05).collect()))
            .collect();
        let init = vec![Tensor::vector(vec![0.5, 0.5]), Tensor::vector(vec![-0.5, 1.0])];

        let mut a = init.clone();
        let mut adam_a = Adam::new(AdamConfig::default(), &a);
        let mut b = init.clone();
        let mut adam_b = Adam::new(unclipped(), &b);
        for _ in 0..3 {
            let n = adam_a.step(&mut a, &raw).unwrap();
            assert!((n - 10.0).abs() < 1e-12);
            adam_b.step(&mut b, &scaled).unwrap();
        }
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut params = vec![Tensor::vector(vec![0.0; 3])];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        assert!(adam.step(&mut params, &[Tensor::zeros(&[2])]).is_err());
    }
}
