//! Generalized advantage estimation over `[t, lane]` arrays.

use alloc::vec;
use alloc::vec::Vec;

/// Backward recursion
/// `δ_t = r_t + γ(1 − done_t)V_{t+1} − V_t`, `A_t = δ_t + γλ(1 − done_t)A_{t+1}`,
/// `R_t = A_t + V_t`, with `V_T` taken from `bootstrap`.
///
/// All per-step slices are `[t, lane]` row-major; `bootstrap` has one entry per lane.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let lanes = bootstrap.len();
    debug_assert!(lanes > 0 && rewards.len().is_multiple_of(lanes));
    debug_assert_eq!(rewards.len(), values.len());
    debug_assert_eq!(rewards.len(), dones.len());
    let steps = rewards.len() / lanes;
    let mut adv = vec![0.0; rewards.len()];
    for (lane, &boot) in bootstrap.iter().enumerate() {
        let mut next_value = boot;
        let mut next_adv = 0.0;
        for t in (0..steps).rev() {
            let i = t * lanes + lane;
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * live * next_value - values[i];
            let a = delta + gamma * lambda * live * next_adv;
            adv[i] = a;
            next_adv = a;
            next_value = values[i];
        }
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = crate::math::sqrt(var);
    if std > 0.0 {
        xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
    } else {
        xs.iter_mut().for_each(|x| *x -= mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    #[test]
    fn undiscounted_zero_values_give_reward_to_go() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let (a, ret) = compute_gae(&r, &[0.0; 4], &[false; 4], &[0.0], 1.0, 1.0);
        assert_eq!(a, vec![2.5, 1.5, 3.5, 3.0]);
        assert_eq!(ret, a);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let r = [1.0, 0.5, -1.0];
        let v = [0.2, -0.3, 0.7];
        let (a, _) = compute_gae(&r, &v, &[false, true, false], &[0.4], 0.9, 0.0);
        assert_eq!(a[0], 1.0 + 0.9 * -0.3 - 0.2);
        assert_eq!(a[1], 0.5 - -0.3);
        assert_eq!(a[2], -1.0 + 0.9 * 0.4 - 0.7);
    }

    /// Explicit double sum: `A_t = Σ_{s≥t} (γλ)^{s−t} Π_{u∈[t,s)} (1 − done_u) δ_s`.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let n = r.len();
        let delta: Vec<f64> = (0..n)
            .map(|s| {
                let next = if s + 1 < n { v[s + 1] } else { boot };
                let live = if d[s] { 0.0 } else { 1.0 };
                r[s] + gamma * live * next - v[s]
            })
            .collect();
        (0..n)
            .map(|t| {
                let mut total = 0.0;
                for (s, &ds) in delta.iter().enumerate().skip(t) {
                    let alive = (t..s).all(|u| !d[u]);
                    if alive {
                        total += libm::pow(gamma * lambda, (s - t) as f64) * ds;
                    }
                }
                total
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_trajectories() {
        let mut rng = DetRng::new(99, 0);
        for _ in 0..200 {
            let r: Vec<f64> = (0..10).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let v: Vec<f64> = (0..10).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let d: Vec<bool> = (0..10).map(|_| rng.bernoulli(0.2)).collect();
            let boot = rng.uniform_in(-1.0, 1.0);
            let gamma = rng.uniform_in(0.5, 1.0);
            let lambda = rng.uniform();
            let (a, ret) = compute_gae(&r, &v, &d, &[boot], gamma, lambda);
            let want = brute_force(&r, &v, &d, boot, gamma, lambda);
            for t in 0..10 {
                assert!((a[t] - want[t]).abs() < 1e-10);
                assert_eq!(ret[t], a[t] + v[t]);
            }
        }
    }

    #[test]
    fn normalize_gives_unit_moments() {
        let mut xs: Vec<f64> = (0..257).map(|i| (i as f64 * 0.37).sin() * 5.0 + 2.0).collect();
        normalize(&mut xs);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }
}
