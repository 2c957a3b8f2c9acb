//! Central finite-difference check of every parameter gradient.
//!
//! Each draw builds a random network and a random scalar loss, evaluates the analytic gradient
//! with [`Graph::backward`], then perturbs every parameter scalar by `±STEP` and compares with
//! `(L(θ+h) − L(θ−h)) / 2h`. The error for one scalar is `|analytic − numeric| / max(|analytic|,
//! |numeric|, REL_FLOOR)`, so gradients far below the finite-difference noise floor are compared
//! absolutely.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    gaussian_entropy, gaussian_log_prob, AttentionEncoder, AttentionEncoderSpec, Graph, Mlp, MlpSpec, NnError,
    ParamStore, Tensor, Var,
};
use crate::rng::DetRng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchReport {
    pub name: &'static str,
    pub draws: usize,
    pub scalars_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub architectures: Vec<ArchReport>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.architectures.iter().map(|a| a.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < TOLERANCE
    }
}

pub const ARCHITECTURES: [&str; 4] = ["mlp", "attention", "gaussian", "composite"];

/// Runs `draws` random draws for every architecture.
pub fn run(draws: usize, seed: u64) -> Result<GradcheckReport, NnError> {
    let architectures = ARCHITECTURES
        .iter()
        .enumerate()
        .map(|(k, &name)| run_architecture(name, draws, seed.wrapping_add(k as u64 * 0x9E37_79B9)))
        .collect::<Result<_, _>>()?;
    Ok(GradcheckReport { architectures })
}

pub fn run_architecture(name: &'static str, draws: usize, seed: u64) -> Result<ArchReport, NnError> {
    let mut rng = DetRng::new(seed, 0);
    let mut worst: f64 = 0.0;
    let mut scalars = 0;
    for _ in 0..draws {
        let case = Case::random(name, &mut rng)?;
        let (err, n) = case.check()?;
        worst = worst.max(err);
        scalars += n;
    }
    Ok(ArchReport {
        name,
        draws,
        scalars_checked: scalars,
        max_rel_error: worst,
    })
}

fn random_matrix(rng: &mut DetRng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform_in(-1.0, 1.0)).collect(),
    )
    .unwrap()
}

enum Net {
    Mlp(Mlp),
    Attention(AttentionEncoder),
    Gaussian(Mlp),
    Composite(AttentionEncoder, Mlp),
}

struct Case {
    net: Net,
    store: ParamStore,
    input: Tensor,
    batch: usize,
    tokens: usize,
    mask: Vec<bool>,
    actions: Tensor,
    /// Fixed random weights turning the output into a scalar.
    probe: Tensor,
}

impl Case {
    fn random(name: &str, rng: &mut DetRng) -> Result<Self, NnError> {
        let mut store = ParamStore::new();
        let batch = 1 + rng.below(3) as usize;
        let tokens = 1 + rng.below(4) as usize;
        let mut mask: Vec<bool> = (0..batch * tokens).map(|_| rng.bernoulli(0.75)).collect();
        for b in 0..batch {
            let k = rng.below(tokens as u64) as usize;
            mask[b * tokens + k] = true;
        }
        let width = 2 + rng.below(3) as usize;
        let heads = 1 + rng.below(2) as usize;
        let embed = heads * (1 + rng.below(3) as usize);
        let hidden = 2 + rng.below(4) as usize;
        let out = 1 + rng.below(3) as usize;
        let (net, input_rows, probe_len) = match name {
            "mlp" => {
                let spec = MlpSpec::new(vec![width, hidden, 1 + rng.below(4) as usize, out], 1.0)?;
                (Net::Mlp(Mlp::init(spec, &mut store, "mlp", rng)), batch, batch * out)
            }
            "attention" => {
                let spec = AttentionEncoderSpec::new(width, embed, heads, out)?;
                let enc = AttentionEncoder::init(spec, &mut store, "enc", rng);
                (Net::Attention(enc), batch * tokens, batch * out)
            }
            "gaussian" => {
                let spec = MlpSpec::new(vec![width, hidden, out], 1.0)?;
                let mlp = Mlp::init(spec, &mut store, "actor", rng);
                store.add(
                    "log_std",
                    Tensor::vector((0..out).map(|_| rng.uniform_in(-1.0, 0.5)).collect()),
                );
                (Net::Gaussian(mlp), batch, batch)
            }
            _ => {
                let spec = AttentionEncoderSpec::new(width, embed, heads, hidden)?;
                let enc = AttentionEncoder::init(spec, &mut store, "enc", rng);
                let mlp = Mlp::init(MlpSpec::new(vec![hidden, hidden, out], 1.0)?, &mut store, "head", rng);
                store.add(
                    "log_std",
                    Tensor::vector((0..out).map(|_| rng.uniform_in(-1.0, 0.5)).collect()),
                );
                (Net::Composite(enc, mlp), batch * tokens, batch)
            }
        };
        // Re-draw biases too so they do not sit at zero.
        for t in store.tensors_mut() {
            if t.rank() == 1 {
                t.data_mut().iter_mut().for_each(|v| *v = rng.uniform_in(-0.5, 0.5));
            }
        }
        let input = random_matrix(rng, input_rows, width);
        let actions = random_matrix(rng, batch, out);
        let probe = Tensor::vector((0..probe_len).map(|_| rng.uniform_in(-1.0, 1.0)).collect());
        Ok(Self {
            net,
            store,
            input,
            batch,
            tokens,
            mask,
            actions,
            probe,
        })
    }

    fn loss(&self, g: &mut Graph, store: &ParamStore) -> Result<Var, NnError> {
        let x = g.input(self.input.clone());
        let out = match &self.net {
            Net::Mlp(m) => m.forward(g, store, x)?,
            Net::Attention(enc) => enc.forward(g, store, x, self.batch, self.tokens, &self.mask)?,
            Net::Gaussian(m) => {
                let mean = m.forward(g, store, x)?;
                return self.policy_loss(g, store, mean);
            }
            Net::Composite(enc, m) => {
                let h = enc.forward(g, store, x, self.batch, self.tokens, &self.mask)?;
                let h = g.tanh(h);
                let mean = m.forward(g, store, h)?;
                return self.policy_loss(g, store, mean);
            }
        };
        let (r, c) = g.value(out).dims2().expect("rank 2");
        let probe = g.input(self.probe.clone().reshape(&[r, c])?);
        let weighted = g.mul(out, probe)?;
        Ok(g.sum(weighted))
    }

    fn policy_loss(&self, g: &mut Graph, store: &ParamStore, mean: Var) -> Result<Var, NnError> {
        let log_std = g.param(store, store.id_of("log_std").expect("registered"));
        let actions = g.input(self.actions.clone());
        let lp = gaussian_log_prob(g, mean, log_std, actions)?;
        let probe = g.input(self.probe.clone());
        let weighted = g.mul(lp, probe)?;
        let s = g.sum(weighted);
        let h = gaussian_entropy(g, log_std);
        let h = g.scale(h, 0.3);
        g.add(s, h)
    }

    fn eval(&self, store: &ParamStore) -> Result<f64, NnError> {
        let mut g = Graph::new();
        let l = self.loss(&mut g, store)?;
        Ok(g.value(l).item())
    }

    /// Returns the worst error and the number of scalars checked.
    fn check(&self) -> Result<(f64, usize), NnError> {
        let mut g = Graph::new();
        let l = self.loss(&mut g, &self.store)?;
        let analytic = g.backward(l)?.for_store(&self.store);
        let mut worst: f64 = 0.0;
        let mut n = 0;
        let mut probe = self.store.clone();
        for (pi, grad) in analytic.iter().enumerate() {
            for k in 0..grad.len() {
                let orig = probe.tensors()[pi].data()[k];
                probe.tensors_mut()[pi].data_mut()[k] = orig + STEP;
                let up = self.eval(&probe)?;
                probe.tensors_mut()[pi].data_mut()[k] = orig - STEP;
                let down = self.eval(&probe)?;
                probe.tensors_mut()[pi].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * STEP);
                let a = grad.data()[k];
                let denom = libm::fabs(a).max(libm::fabs(numeric)).max(REL_FLOOR);
                worst = worst.max(libm::fabs(a - numeric) / denom);
                n += 1;
            }
        }
        Ok((worst, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let s = g.square(x);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let z = g.scale(x, 0.0);
        let s = g.sum(z);
        let l = g.add_scalar(s, 3.0);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0]));
        let l = g.sum(x);
        g.backward(l).unwrap();
        assert_eq!(g.backward(l).unwrap_err(), NnError::BackwardTwice);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(NnError::NonScalarLoss { .. })));
    }

    #[test]
    fn non_finite_values_are_caught_in_debug() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1000.0]));
        let e = g.exp(x);
        let l = g.sum(e);
        if cfg!(debug_assertions) {
            assert_eq!(g.backward(l).unwrap_err(), NnError::NonFinite { op: "exp" });
        }
    }

    #[test]
    fn every_architecture_passes_a_few_draws() {
        let report = run(5, 17).unwrap();
        for a in &report.architectures {
            assert!(a.max_rel_error < TOLERANCE, "{}: {}", a.name, a.max_rel_error);
            assert!(a.scalars_checked > 0);
        }
    }
}
