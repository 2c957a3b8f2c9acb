//! Shared actor and centralized critic.
//!
//! One parameter set serves every agent. The critic reads the global state; in the attention
//! variant the global state is split into entity tokens before encoding, so both variants take
//! exactly the same inputs.

use alloc::vec::Vec;

use super::{NetConfig, TrainError, Variant};
use crate::env::{global_tokens, Observation, Scenario, TOKEN_WIDTH};
use crate::nn::{
    AttentionEncoder, AttentionEncoderSpec, GaussianHead, GaussianSample, Graph, Mlp, MlpSpec, NnError, ParamId,
    ParamStore, Tensor, Var,
};
use crate::rng::{streams, DetRng};

pub const ACTION_DIM: usize = 2;

/// Input sizes a bundle was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDims {
    pub n_agents: usize,
    pub n_machines: usize,
    pub obs_len: usize,
    pub n_tokens: usize,
    pub global_len: usize,
    pub n_global_tokens: usize,
}

impl PolicyDims {
    pub fn of(scenario: &Scenario) -> Self {
        Self {
            n_agents: scenario.n_agents(),
            n_machines: scenario.n_machines(),
            obs_len: scenario.flat_obs_len(),
            n_tokens: scenario.n_tokens(),
            global_len: scenario.global_state_len(),
            n_global_tokens: scenario.n_global_tokens(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Network {
    Flat(Mlp),
    Attention(AttentionEncoder, Mlp),
}

impl Network {
    #[allow(clippy::too_many_arguments)]
    fn build(
        variant: Variant,
        store: &mut ParamStore,
        prefix: &str,
        flat_in: usize,
        net: &NetConfig,
        out: usize,
        out_gain: f64,
        rng: &mut DetRng,
    ) -> Result<Self, NnError> {
        let h = net.hidden;
        Ok(match variant {
            Variant::FlatMlp => Network::Flat(Mlp::init(
                MlpSpec::new(alloc::vec![flat_in, h, h, out], out_gain)?,
                store,
                prefix,
                rng,
            )),
            Variant::Attention => {
                let spec = AttentionEncoderSpec::new(TOKEN_WIDTH, net.embed_dim, net.heads, h)?;
                let enc = AttentionEncoder::init(spec, store, &alloc::format!("{prefix}.encoder"), rng);
                let head = Mlp::init(
                    MlpSpec::new(alloc::vec![h, h, out], out_gain)?,
                    store,
                    &alloc::format!("{prefix}.head"),
                    rng,
                );
                Network::Attention(enc, head)
            }
        })
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, input: &EncoderInput<'_>) -> Result<Var, NnError> {
        match self {
            Network::Flat(mlp) => {
                let x = g.input(Tensor::matrix(input.batch, input.flat_width, input.flat.to_vec())?);
                mlp.forward(g, store, x)
            }
            Network::Attention(enc, head) => {
                let x = g.input(Tensor::matrix(
                    input.batch * input.n_tokens,
                    TOKEN_WIDTH,
                    input.tokens.to_vec(),
                )?);
                let mask = alloc::vec![true; input.batch * input.n_tokens];
                let h = enc.forward(g, store, x, input.batch, input.n_tokens, &mask)?;
                let h = g.tanh(h);
                head.forward(g, store, h)
            }
        }
    }
}

/// Borrowed batch of encoder inputs in both views.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub batch: usize,
    pub flat: &'a [f64],
    pub flat_width: usize,
    pub tokens: &'a [f64],
    pub n_tokens: usize,
}

/// Owned observation batch, `[B, obs_len]` and `[B * n_tokens, TOKEN_WIDTH]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObsBatch {
    pub batch: usize,
    pub flat: Vec<f64>,
    pub tokens: Vec<f64>,
}

impl ObsBatch {
    pub fn from_observations<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> Self {
        let mut out = ObsBatch::default();
        for o in obs {
            out.batch += 1;
            out.flat.extend_from_slice(&o.flat);
            out.tokens.extend_from_slice(&o.tokens);
        }
        out
    }
}

/// Actor + critic parameters for one encoder variant.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    variant: Variant,
    net: NetConfig,
    dims: PolicyDims,
    store: ParamStore,
    actor: Network,
    critic: Network,
    log_std: ParamId,
}

impl PolicyBundle {
    pub fn new(scenario: &Scenario, variant: Variant, net: NetConfig, seed: u64) -> Result<Self, TrainError> {
        net.validate()?;
        let dims = PolicyDims::of(scenario);
        let mut rng = DetRng::new(seed, streams::INIT);
        let mut store = ParamStore::new();
        let actor = Network::build(
            variant,
            &mut store,
            "actor",
            dims.obs_len,
            &net,
            ACTION_DIM,
            0.01,
            &mut rng,
        )?;
        let critic = Network::build(variant, &mut store, "critic", dims.global_len, &net, 1, 1.0, &mut rng)?;
        let log_std = store.add("log_std", Tensor::full(&[ACTION_DIM], net.init_log_std));
        Ok(Self {
            variant,
            net,
            dims,
            store,
            actor,
            critic,
            log_std,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn net(&self) -> &NetConfig {
        &self.net
    }

    pub fn dims(&self) -> &PolicyDims {
        &self.dims
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn log_std_id(&self) -> ParamId {
        self.log_std
    }

    pub fn log_std(&self) -> &[f64] {
        self.store.get(self.log_std).data()
    }

    fn obs_input<'a>(&self, obs: &'a ObsBatch) -> EncoderInput<'a> {
        EncoderInput {
            batch: obs.batch,
            flat: &obs.flat,
            flat_width: self.dims.obs_len,
            tokens: &obs.tokens,
            n_tokens: self.dims.n_tokens,
        }
    }

    /// Action means `[B, 2]`.
    pub fn actor_mean(&self, g: &mut Graph, obs: &ObsBatch) -> Result<Var, NnError> {
        self.actor.forward(g, &self.store, &self.obs_input(obs))
    }

    /// Values `[B, 1]` for `globals` laid out `[B, global_len]`.
    pub fn critic_value(&self, g: &mut Graph, globals: &[f64]) -> Result<Var, NnError> {
        let batch = globals.len() / self.dims.global_len;
        let tokens: Vec<f64> = match self.variant {
            Variant::FlatMlp => Vec::new(),
            Variant::Attention => globals
                .chunks_exact(self.dims.global_len)
                .flat_map(|gs| global_tokens(gs, self.dims.n_agents, self.dims.n_machines))
                .collect(),
        };
        let input = EncoderInput {
            batch,
            flat: globals,
            flat_width: self.dims.global_len,
            tokens: &tokens,
            n_tokens: self.dims.n_global_tokens,
        };
        self.critic.forward(g, &self.store, &input)
    }

    /// Samples (or, with `rng = None`, returns the mean of) one action per observation.
    pub fn act(&self, obs: &ObsBatch, rng: Option<&mut DetRng>) -> Result<GaussianSample, NnError> {
        let mut g = Graph::new();
        let mean = self.actor_mean(&mut g, obs)?;
        g.check_finite()?;
        Ok(GaussianHead::sample(g.value(mean).data(), self.log_std(), rng))
    }

    pub fn values(&self, globals: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut g = Graph::new();
        let v = self.critic_value(&mut g, globals)?;
        g.check_finite()?;
        Ok(g.value(v).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ScenarioConfig;

    #[test]
    fn both_variants_build_and_run() {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let (s, obs) = sc.reset(1).unwrap();
        let gs = sc.global_state(&s);
        for variant in [Variant::FlatMlp, Variant::Attention] {
            let net = NetConfig {
                hidden: 16,
                embed_dim: 8,
                heads: 2,
                ..NetConfig::default()
            };
            let p = PolicyBundle::new(&sc, variant, net, 3).unwrap();
            let batch = ObsBatch::from_observations(&obs);
            let a = p.act(&batch, None).unwrap();
            assert_eq!(a.actions.len(), 3 * ACTION_DIM);
            assert_eq!(p.values(&gs).unwrap().len(), 1);
            assert!(p.store().id_of("log_std").is_some());
        }
    }

    #[test]
    fn shared_actor_gives_identical_distributions_for_identical_observations() {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let (_, obs) = sc.reset(4).unwrap();
        for variant in [Variant::FlatMlp, Variant::Attention] {
            let p = PolicyBundle::new(&sc, variant, NetConfig::default(), 8).unwrap();
            let batch = ObsBatch::from_observations([&obs[1], &obs[0], &obs[1]]);
            let a = p.act(&batch, None).unwrap();
            assert_eq!(a.actions[0..2], a.actions[4..6]);
            assert_eq!(a.log_probs[0], a.log_probs[2]);
        }
    }

    #[test]
    fn initialization_is_seeded() {
        let sc = Scenario::new(ScenarioConfig::reduced()).unwrap();
        let a = PolicyBundle::new(&sc, Variant::Attention, NetConfig::default(), 1).unwrap();
        let b = PolicyBundle::new(&sc, Variant::Attention, NetConfig::default(), 1).unwrap();
        let c = PolicyBundle::new(&sc, Variant::Attention, NetConfig::default(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
