//! Set encoder: per-token embedding, one multi-head self-attention block with a residual
//! connection, masked mean-pool over tokens and a linear output projection.
//!
//! Pooling is a symmetric function of the token rows, so the output does not depend on token
//! order.

use alloc::format;
use alloc::vec::Vec;

use super::{orthogonal, Graph, NnError, ParamId, ParamStore, Tensor, Var};
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionEncoderSpec {
    pub token_width: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub out_dim: usize,
}

impl AttentionEncoderSpec {
    pub fn new(token_width: usize, embed_dim: usize, heads: usize, out_dim: usize) -> Result<Self, NnError> {
        if token_width == 0 || embed_dim == 0 || out_dim == 0 {
            return Err(NnError::Spec("attention widths must be positive"));
        }
        if heads == 0 || !embed_dim.is_multiple_of(heads) {
            return Err(NnError::Spec("embedding width must be divisible by the head count"));
        }
        Ok(Self {
            token_width,
            embed_dim,
            heads,
            out_dim,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionEncoder {
    spec: AttentionEncoderSpec,
    embed_w: ParamId,
    embed_b: ParamId,
    query: ParamId,
    key: ParamId,
    value: ParamId,
    mix_w: ParamId,
    mix_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl AttentionEncoder {
    pub fn init(spec: AttentionEncoderSpec, store: &mut ParamStore, prefix: &str, rng: &mut DetRng) -> Self {
        let (w, d, o) = (spec.token_width, spec.embed_dim, spec.out_dim);
        let sqrt2 = core::f64::consts::SQRT_2;
        let mut add = |name: &str, t: Tensor| store.add(format!("{prefix}.{name}"), t);
        let embed_w = add("embed.weight", orthogonal(w, d, sqrt2, rng));
        let embed_b = add("embed.bias", Tensor::zeros(&[d]));
        let query = add("query.weight", orthogonal(d, d, 1.0, rng));
        let key = add("key.weight", orthogonal(d, d, 1.0, rng));
        let value = add("value.weight", orthogonal(d, d, 1.0, rng));
        let mix_w = add("mix.weight", orthogonal(d, d, 1.0, rng));
        let mix_b = add("mix.bias", Tensor::zeros(&[d]));
        let out_w = add("out.weight", orthogonal(d, o, sqrt2, rng));
        let out_b = add("out.bias", Tensor::zeros(&[o]));
        Self {
            spec,
            embed_w,
            embed_b,
            query,
            key,
            value,
            mix_w,
            mix_b,
            out_w,
            out_b,
        }
    }

    pub fn spec(&self) -> &AttentionEncoderSpec {
        &self.spec
    }

    /// `tokens` is `[batch * n_tokens, token_width]`; returns `[batch, out_dim]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        tokens: Var,
        batch: usize,
        n_tokens: usize,
        mask: &[bool],
    ) -> Result<Var, NnError> {
        let got = g.value(tokens).shape().to_vec();
        if got != [batch * n_tokens, self.spec.token_width] {
            return Err(NnError::ShapeMismatch {
                op: "attention_encode",
                left: got,
                right: alloc::vec![batch * n_tokens, self.spec.token_width],
            });
        }
        let p = |g: &mut Graph, id| g.param(store, id);
        let (ew, eb) = (p(g, self.embed_w), p(g, self.embed_b));
        let e = g.matmul(tokens, ew)?;
        let e = g.add_row(e, eb)?;
        let (wq, wk, wv) = (p(g, self.query), p(g, self.key), p(g, self.value));
        let q = g.matmul(e, wq)?;
        let k = g.matmul(e, wk)?;
        let v = g.matmul(e, wv)?;
        let a = g.attention(q, k, v, batch, n_tokens, self.spec.heads, mask)?;
        let (mw, mb) = (p(g, self.mix_w), p(g, self.mix_b));
        let m = g.matmul(a, mw)?;
        let m = g.add_row(m, mb)?;
        let h = g.add(e, m)?;
        let pooled = g.masked_mean_pool(h, batch, n_tokens, mask)?;
        let (ow, ob) = (p(g, self.out_w), p(g, self.out_b));
        let y = g.matmul(pooled, ow)?;
        g.add_row(y, ob)
    }

    /// Convenience form over a `[batch, tokens, width]` tensor and a `[batch, tokens]` 0/1 mask.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, tokens: &Tensor, mask: &Tensor) -> Result<Var, NnError> {
        let (batch, n_tokens, width) = match tokens.shape() {
            &[b, t, w] => (b, t, w),
            other => {
                return Err(NnError::ShapeMismatch {
                    op: "attention_encode",
                    left: other.to_vec(),
                    right: alloc::vec![self.spec.token_width],
                })
            }
        };
        if mask.shape() != [batch, n_tokens] {
            return Err(NnError::ShapeMismatch {
                op: "attention_encode",
                left: mask.shape().to_vec(),
                right: alloc::vec![batch, n_tokens],
            });
        }
        let flags: Vec<bool> = mask.data().iter().map(|&m| m != 0.0).collect();
        let flat = tokens.clone().reshape(&[batch * n_tokens, width])?;
        let x = g.input(flat);
        self.forward(g, store, x, batch, n_tokens, &flags)
    }
}
