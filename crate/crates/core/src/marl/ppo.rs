use alloc::vec::Vec;

use super::gae::normalize;
use super::policy::ACTION_DIM;
use super::{PolicyBundle, PpoConfig, RolloutBuffer, TrainError};
use crate::math;
use crate::nn::{gaussian_entropy, gaussian_log_prob, Adam, Graph, Tensor, Var};
use crate::rng::DetRng;

/// `−mean(min(ρ·A, clip(ρ, 1−ε, 1+ε)·A))` evaluated directly on values.
pub fn clipped_policy_loss(ratios: &[f64], advantages: &[f64], eps: f64) -> f64 {
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a))
        .sum();
    -total / ratios.len() as f64
}

/// Quantities observed on one minibatch before its optimizer step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MinibatchProbe {
    pub policy_loss: f64,
    pub clip_frac: f64,
    /// Mean of the (normalized) advantages in the minibatch.
    pub mean_adv: f64,
    /// `max |ρ − 1|`
    pub max_ratio_dev: f64,
}

/// Minibatch averages over all epochs of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    /// The literal first minibatch of the first epoch.
    pub first: MinibatchProbe,
    /// Moments of the advantages fed to the surrogate.
    pub adv_mean: f64,
    pub adv_std: f64,
}

/// Runs `epochs × minibatches` clipped-PPO steps on a buffer whose advantages are computed.
///
/// Minibatches partition the `(t, env)` pairs, so every agent of an instance-step lands in the
/// same minibatch.
pub fn ppo_update(
    policy: &mut PolicyBundle,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    rng: &mut DetRng,
    update: u64,
) -> Result<UpdateStats, TrainError> {
    let n = buffer.n_agents;
    let pairs = buffer.rollout_len * buffer.n_envs;
    let per_mb = pairs / config.minibatches;
    let mut adv = buffer.advantages.clone();
    if config.normalize_advantages {
        normalize(&mut adv);
    }
    let (adv_mean, adv_std) = moments(&adv);

    let mut order: Vec<usize> = (0..pairs).collect();
    let mut sum = UpdateStats {
        adv_mean,
        adv_std,
        ..UpdateStats::default()
    };
    let mut count = 0.0;
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        for mb in 0..config.minibatches {
            let samples: Vec<usize> = order[mb * per_mb..(mb + 1) * per_mb]
                .iter()
                .flat_map(|&p| p * n..(p + 1) * n)
                .collect();
            let at = |what| TrainError::NonFinite {
                what,
                update,
                epoch,
                minibatch: mb,
            };
            let out = minibatch_step(policy, adam, buffer, config, &samples, &adv).map_err(|e| match e {
                StepError::NonFinite(what) => at(what),
                StepError::Other(e) => e,
            })?;
            if epoch == 0 && mb == 0 {
                sum.first = out.probe;
            }
            sum.policy_loss += out.probe.policy_loss;
            sum.clip_frac += out.probe.clip_frac;
            sum.value_loss += out.value_loss;
            sum.entropy += out.entropy;
            sum.approx_kl += out.approx_kl;
            sum.grad_norm += out.grad_norm;
            count += 1.0;
        }
    }
    sum.policy_loss /= count;
    sum.clip_frac /= count;
    sum.value_loss /= count;
    sum.entropy /= count;
    sum.approx_kl /= count;
    sum.grad_norm /= count;
    Ok(sum)
}

struct StepOut {
    probe: MinibatchProbe,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    grad_norm: f64,
}

enum StepError {
    NonFinite(&'static str),
    Other(TrainError),
}

impl<E: Into<TrainError>> From<E> for StepError {
    fn from(e: E) -> Self {
        StepError::Other(e.into())
    }
}

fn minibatch_step(
    policy: &mut PolicyBundle,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    samples: &[usize],
    adv_all: &[f64],
) -> Result<StepOut, StepError> {
    let b = samples.len();
    let eps = config.clip_eps;
    let pick = |src: &[f64]| -> Vec<f64> { samples.iter().map(|&s| src[s]).collect() };
    let adv = pick(adv_all);
    let old_lp = pick(&buffer.log_probs);
    let old_v = pick(&buffer.values);
    let returns = pick(&buffer.returns);
    let actions: Vec<f64> = samples
        .iter()
        .flat_map(|&s| buffer.actions[s * ACTION_DIM..(s + 1) * ACTION_DIM].iter().copied())
        .collect();
    let obs = buffer.gather_obs(samples);
    let globals = buffer.gather_globals(samples);

    let mut g = Graph::new();
    let mean = policy.actor_mean(&mut g, &obs)?;
    let log_std = g.param(policy.store(), policy.log_std_id());
    let act = g.input(Tensor::matrix(b, ACTION_DIM, actions)?);
    let lp = gaussian_log_prob(&mut g, mean, log_std, act)?;
    let old = g.input(Tensor::vector(old_lp));
    let diff = g.sub(lp, old)?;
    let ratio = g.exp(diff);
    let a = g.input(Tensor::vector(adv.clone()));
    let s1 = g.mul(ratio, a)?;
    let clipped = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
    let s2 = g.mul(clipped, a)?;
    let surr = g.minimum(s1, s2)?;
    let surr = g.mean(surr);
    let policy_loss = g.scale(surr, -1.0);

    let value = policy.critic_value(&mut g, &globals)?;
    let value_loss = value_loss(&mut g, value, old_v, returns, config)?;
    let entropy = gaussian_entropy(&mut g, log_std);

    let weighted_v = g.scale(value_loss, config.value_coef);
    let weighted_e = g.scale(entropy, config.entropy_coef);
    let total = g.add(policy_loss, weighted_v)?;
    let total = g.sub(total, weighted_e)?;

    let pl = g.value(policy_loss).item();
    let vl = g.value(value_loss).item();
    for (what, v) in [
        ("policy loss", pl),
        ("value loss", vl),
        ("total loss", g.value(total).item()),
    ] {
        if !v.is_finite() {
            return Err(StepError::NonFinite(what));
        }
    }
    let ratios = g.value(ratio).data();
    let clip_hits = ratios.iter().filter(|r| (**r - 1.0).abs() > eps).count();
    let approx_kl = ratios.iter().map(|&r| (r - 1.0) - math::ln(r)).sum::<f64>() / b as f64;
    let probe = MinibatchProbe {
        policy_loss: pl,
        clip_frac: clip_hits as f64 / b as f64,
        mean_adv: adv.iter().sum::<f64>() / b as f64,
        max_ratio_dev: ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max),
    };
    let entropy = g.value(entropy).item();

    let grads = g.backward(total)?.for_store(policy.store());
    if grads.iter().any(|t| !t.all_finite()) {
        return Err(StepError::NonFinite("gradient"));
    }
    let grad_norm = adam.step(policy.store_mut().tensors_mut(), &grads)?;
    Ok(StepOut {
        probe,
        value_loss: vl,
        entropy,
        approx_kl,
        grad_norm,
    })
}

/// `0.5·mean(max((V − R)², (V_old + clip(V − V_old, −ε, ε) − R)²))`, or the unclipped form.
fn value_loss(
    g: &mut Graph,
    value: Var,
    old_v: Vec<f64>,
    returns: Vec<f64>,
    config: &PpoConfig,
) -> Result<Var, TrainError> {
    let b = returns.len();
    let r = g.input(Tensor::matrix(b, 1, returns)?);
    let err = g.sub(value, r)?;
    let mut sq = g.square(err);
    if config.clip_value {
        let old = g.input(Tensor::matrix(b, 1, old_v)?);
        let delta = g.sub(value, old)?;
        let delta = g.clamp(delta, -config.clip_eps, config.clip_eps);
        let v_clip = g.add(old, delta)?;
        let err_clip = g.sub(v_clip, r)?;
        let sq_clip = g.square(err_clip);
        sq = g.maximum(sq, sq_clip)?;
    }
    let m = g.mean(sq);
    Ok(g.scale(m, 0.5))
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, math::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Scenario, ScenarioConfig, VecEnv};
    use crate::marl::{collect_rollout, NetConfig, PolicyDims, Variant};
    use crate::nn::AdamConfig;

    #[test]
    fn hand_evaluated_clip() {
        assert!((clipped_policy_loss(&[1.5], &[2.0], 0.2) - -2.4).abs() < 1e-12);
        assert!((clipped_policy_loss(&[0.5], &[-1.0], 0.2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_advantages_give_zero_loss() {
        assert_eq!(clipped_policy_loss(&[0.3, 1.0, 7.0], &[0.0; 3], 0.2), 0.0);
    }

    #[test]
    fn ratio_one_on_first_minibatch() {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        for variant in [Variant::FlatMlp, Variant::Attention] {
            let net = NetConfig {
                hidden: 16,
                embed_dim: 8,
                heads: 2,
                ..NetConfig::default()
            };
            let mut policy = PolicyBundle::new(&sc, variant, net, 5).unwrap();
            let cfg = PpoConfig {
                rollout_len: 8,
                n_envs: 2,
                ..PpoConfig::default()
            };
            let mut envs = VecEnv::new(sc.clone(), cfg.n_envs, 5).unwrap();
            let mut buf = RolloutBuffer::new(cfg.rollout_len, cfg.n_envs, PolicyDims::of(&sc));
            let mut rng = DetRng::new(5, 2);
            collect_rollout(&mut envs, &policy, &mut buf, &mut rng).unwrap();
            buf.compute_gae(cfg.gamma, cfg.gae_lambda);
            let mut adam = Adam::new(AdamConfig::default(), policy.store().tensors());
            let stats = ppo_update(&mut policy, &mut adam, &buf, &cfg, &mut rng, 0).unwrap();
            assert_eq!(stats.first.clip_frac, 0.0);
            assert!(stats.first.max_ratio_dev < 1e-12);
            assert!((stats.first.policy_loss + stats.first.mean_adv).abs() < 1e-12);
            assert!(stats.adv_mean.abs() < 1e-10 && (stats.adv_std - 1.0).abs() < 1e-6);
            assert!(stats.value_loss.is_finite() && stats.approx_kl >= 0.0);
        }
    }
}
