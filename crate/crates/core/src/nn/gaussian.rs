//! Diagonal Gaussian policy head with a state-independent log standard deviation.

use alloc::vec::Vec;

use super::{Graph, NnError, Var};
use crate::math;
use crate::rng::DetRng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `ln(2π)`
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Per-row log-density of `actions` under `N(mean, diag(exp(log_std))²)`: `[B, A] -> [B]`.
pub fn gaussian_log_prob(g: &mut Graph, mean: Var, log_std: Var, actions: Var) -> Result<Var, NnError> {
    let (b, a) = g
        .value(mean)
        .dims2()
        .ok_or(NnError::Spec("mean must be [batch, action_dim]"))?;
    let ls = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
    let ls_rows = g.broadcast_rows(ls, b)?;
    let diff = g.sub(actions, mean)?;
    let neg_ls = g.scale(ls_rows, -1.0);
    let inv_std = g.exp(neg_ls);
    let z = g.mul(diff, inv_std)?;
    let z2 = g.square(z);
    let quad = g.sum_cols(z2)?;
    let quad = g.scale(quad, -0.5);
    let log_det = g.sum_cols(ls_rows)?;
    let lp = g.sub(quad, log_det)?;
    Ok(g.add_scalar(lp, -0.5 * a as f64 * LN_2PI))
}

/// Entropy of the diagonal Gaussian, a scalar.
pub fn gaussian_entropy(g: &mut Graph, log_std: Var) -> Var {
    let a = g.value(log_std).len();
    let ls = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
    let s = g.sum(ls);
    g.add_scalar(s, a as f64 * 0.5 * (1.0 + LN_2PI))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    /// `[B, A]` row-major.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub entropy: f64,
}

/// Sampling side of the head, evaluated outside any graph.
#[derive(Debug, Clone, Copy)]
pub struct GaussianHead;

impl GaussianHead {
    /// Draws `mean + exp(log_std)·ζ` per row. With `rng = None` the head is deterministic and
    /// returns the mean.
    pub fn sample(mean: &[f64], log_std: &[f64], rng: Option<&mut DetRng>) -> GaussianSample {
        let a = log_std.len();
        let ls: Vec<f64> = log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        let std: Vec<f64> = ls.iter().map(|&v| math::exp(v)).collect();
        let mut actions = mean.to_vec();
        if let Some(rng) = rng {
            for (i, x) in actions.iter_mut().enumerate() {
                *x += std[i % a] * rng.normal();
            }
        }
        let log_probs = Self::log_prob(mean, log_std, &actions);
        GaussianSample {
            actions,
            log_probs,
            entropy: Self::entropy(log_std),
        }
    }

    pub fn log_prob(mean: &[f64], log_std: &[f64], actions: &[f64]) -> Vec<f64> {
        let a = log_std.len();
        mean.chunks(a)
            .zip(actions.chunks(a))
            .map(|(mu, x)| {
                let mut lp = -0.5 * a as f64 * LN_2PI;
                for k in 0..a {
                    let ls = log_std[k].clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let z = (x[k] - mu[k]) * math::exp(-ls);
                    lp -= 0.5 * z * z + ls;
                }
                lp
            })
            .collect()
    }

    pub fn entropy(log_std: &[f64]) -> f64 {
        log_std
            .iter()
            .map(|v| 0.5 * (1.0 + LN_2PI) + v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use alloc::vec;

    #[test]
    fn ln_2pi_constant() {
        assert!((LN_2PI - math::ln(2.0 * math::PI)).abs() < 1e-15);
    }

    #[test]
    fn log_prob_at_mode() {
        let lp = GaussianHead::log_prob(&[0.3, -0.2], &[0.0, 0.0], &[0.3, -0.2]);
        assert!((lp[0] + math::ln(2.0 * math::PI)).abs() < 1e-12);
        let lp3 = GaussianHead::log_prob(&[0.0; 3], &[0.0; 3], &[0.0; 3]);
        assert!((lp3[0] + 1.5 * math::ln(2.0 * math::PI)).abs() < 1e-12);
    }

    #[test]
    fn unit_entropy_two_dims() {
        let h = GaussianHead::entropy(&[0.0, 0.0]);
        assert!((h - 2.8379).abs() < 1e-4);
        assert!((h - math::ln(2.0 * math::PI * core::f64::consts::E)).abs() < 1e-12);
    }

    #[test]
    fn seeded_samples_replay() {
        let mean = [0.1, 0.2, -0.3, 0.4];
        let ls = [-0.5, 0.3];
        let a = GaussianHead::sample(&mean, &ls, Some(&mut DetRng::new(5, 2)));
        let b = GaussianHead::sample(&mean, &ls, Some(&mut DetRng::new(5, 2)));
        assert_eq!(a, b);
        let det = GaussianHead::sample(&mean, &ls, None);
        assert_eq!(det.actions, mean.to_vec());
    }

    #[test]
    fn log_std_is_clamped() {
        assert_eq!(GaussianHead::entropy(&[9.0]), GaussianHead::entropy(&[LOG_STD_MAX]));
        assert_eq!(GaussianHead::entropy(&[-9.0]), GaussianHead::entropy(&[LOG_STD_MIN]));
    }

    #[test]
    fn graph_and_closed_form_agree() {
        let mean = vec![0.1, 0.2, -0.3, 0.4];
        let ls = vec![-0.5, 0.3];
        let acts = vec![0.0, 1.0, -1.0, 0.5];
        let mut g = Graph::new();
        let m = g.input(Tensor::matrix(2, 2, mean.clone()).unwrap());
        let l = g.input(Tensor::vector(ls.clone()));
        let x = g.input(Tensor::matrix(2, 2, acts.clone()).unwrap());
        let lp = gaussian_log_prob(&mut g, m, l, x).unwrap();
        let h = gaussian_entropy(&mut g, l);
        let want = GaussianHead::log_prob(&mean, &ls, &acts);
        for (a, b) in g.value(lp).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.value(h).item() - GaussianHead::entropy(&ls)).abs() < 1e-12);
    }
}
