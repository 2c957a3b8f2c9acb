//! Per-agent observations in two views built from the same numbers.
//!
//! The flat view is `[self pos, self vel, carrying | other agents: rel pos, rel vel | machines:
//! rel access point, ready, time-to-ready | storage: rel center]`. The token view holds one
//! fixed-width row per entity in the same order: a 4-way kind one-hot, the entity's flat fields,
//! then zero padding.

use alloc::vec::Vec;

use super::{flag, time_to_ready, Scenario, WorldState};

/// Kind one-hot width.
pub const TOKEN_KINDS: usize = 4;
/// Largest payload (the self token: position, velocity, carrying).
pub const PAYLOAD_WIDTH: usize = 5;
pub const TOKEN_WIDTH: usize = TOKEN_KINDS + PAYLOAD_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    SelfAgent = 0,
    Agent = 1,
    Machine = 2,
    Storage = 3,
}

impl TokenKind {
    /// Number of meaningful payload fields in an observation token of this kind.
    pub fn payload_len(self) -> usize {
        match self {
            TokenKind::SelfAgent => 5,
            TokenKind::Agent | TokenKind::Machine => 4,
            TokenKind::Storage => 2,
        }
    }

    fn from_one_hot(row: &[f64]) -> Option<Self> {
        let idx = row[..TOKEN_KINDS].iter().position(|&v| v == 1.0)?;
        Some([Self::SelfAgent, Self::Agent, Self::Machine, Self::Storage][idx])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObserveError {
    #[error("agent index {index} out of range for {n_agents} agents")]
    AgentOutOfRange { index: usize, n_agents: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub flat: Vec<f64>,
    /// Row-major `[n_tokens, TOKEN_WIDTH]`.
    pub tokens: Vec<f64>,
    pub n_tokens: usize,
}

impl Observation {
    pub fn token(&self, i: usize) -> &[f64] {
        &self.tokens[i * TOKEN_WIDTH..(i + 1) * TOKEN_WIDTH]
    }

    pub fn token_kind(&self, i: usize) -> Option<TokenKind> {
        TokenKind::from_one_hot(self.token(i))
    }

    /// Meaningful payload fields of token `i` (kind one-hot and padding stripped).
    pub fn token_payload(&self, i: usize) -> &[f64] {
        let len = self.token_kind(i).map_or(0, TokenKind::payload_len);
        &self.token(i)[TOKEN_KINDS..TOKEN_KINDS + len]
    }
}

fn push_token(tokens: &mut Vec<f64>, kind: TokenKind, payload: &[f64]) {
    debug_assert!(payload.len() <= PAYLOAD_WIDTH);
    let mut row = [0.0; TOKEN_WIDTH];
    row[kind as usize] = 1.0;
    row[TOKEN_KINDS..TOKEN_KINDS + payload.len()].copy_from_slice(payload);
    tokens.extend_from_slice(&row);
}

pub(super) fn build(scenario: &Scenario, state: &WorldState, me: usize) -> Observation {
    let c = scenario.config();
    let n_tokens = scenario.n_tokens();
    let mut flat = Vec::with_capacity(scenario.flat_obs_len());
    let mut tokens = Vec::with_capacity(n_tokens * TOKEN_WIDTH);
    let mut emit = |kind: TokenKind, payload: &[f64]| {
        flat.extend_from_slice(payload);
        push_token(&mut tokens, kind, payload);
    };

    let own = &state.agents[me];
    emit(
        TokenKind::SelfAgent,
        &[
            own.position.x,
            own.position.y,
            own.velocity.x,
            own.velocity.y,
            flag(own.carrying),
        ],
    );
    for (j, other) in state.agents.iter().enumerate() {
        if j == me {
            continue;
        }
        let dp = other.position - own.position;
        let dv = other.velocity - own.velocity;
        emit(TokenKind::Agent, &[dp.x, dp.y, dv.x, dv.y]);
    }
    for (spec, m) in c.machines.iter().zip(&state.machines) {
        let dp = spec.access_point - own.position;
        emit(
            TokenKind::Machine,
            &[dp.x, dp.y, flag(m.is_ready()), time_to_ready(spec, m)],
        );
    }
    let ds = c.storage_rect.center() - own.position;
    emit(TokenKind::Storage, &[ds.x, ds.y]);

    Observation { flat, tokens, n_tokens }
}

/// Splits a global-state vector into entity tokens for an attention critic: one agent token per
/// agent (position, velocity, carrying), one machine token per machine, and a storage token
/// carrying the storage center and the normalized step index.
pub fn global_tokens(global_state: &[f64], n_agents: usize, n_machines: usize) -> Vec<f64> {
    debug_assert_eq!(global_state.len(), 5 * n_agents + 4 * n_machines + 3);
    let mut tokens = Vec::with_capacity((n_agents + n_machines + 1) * TOKEN_WIDTH);
    let (agents, rest) = global_state.split_at(5 * n_agents);
    let (machines, storage) = rest.split_at(4 * n_machines);
    for a in agents.chunks_exact(5) {
        push_token(&mut tokens, TokenKind::Agent, a);
    }
    for m in machines.chunks_exact(4) {
        push_token(&mut tokens, TokenKind::Machine, m);
    }
    push_token(&mut tokens, TokenKind::Storage, storage);
    tokens
}
