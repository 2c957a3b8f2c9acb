use alloc::format;
use alloc::vec::Vec;

use super::{orthogonal, Graph, NnError, ParamId, ParamStore, Tensor, Var};
use crate::rng::DetRng;

/// Widths `[input, hidden.., output]`, tanh on hidden layers and identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    /// Orthogonal-init gain of the output layer (hidden layers use √2).
    pub output_gain: f64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, output_gain: f64) -> Result<Self, NnError> {
        if widths.len() < 3 {
            return Err(NnError::Spec("an MLP needs at least one hidden layer"));
        }
        if widths.contains(&0) {
            return Err(NnError::Spec("layer widths must be positive"));
        }
        Ok(Self { widths, output_gain })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `prefix.{i}.weight` / `prefix.{i}.bias` in `store`.
    pub fn init(spec: MlpSpec, store: &mut ParamStore, prefix: &str, rng: &mut DetRng) -> Self {
        let n = spec.widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (spec.widths[i], spec.widths[i + 1]);
                let gain = if i + 1 == n {
                    spec.output_gain
                } else {
                    core::f64::consts::SQRT_2
                };
                let w = store.add(format!("{prefix}.{i}.weight"), orthogonal(fan_in, fan_out, gain, rng));
                let b = store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[fan_out]));
                (w, b)
            })
            .collect();
        Self { spec, layers }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let got = g.value(x).shape().to_vec();
        if got.len() != 2 || got[1] != self.spec.input_width() {
            return Err(NnError::ShapeMismatch {
                op: "mlp",
                left: got,
                right: alloc::vec![self.spec.input_width()],
            });
        }
        let layers: Vec<(Var, Var)> = self
            .layers
            .iter()
            .map(|&(w, b)| (g.param(store, w), g.param(store, b)))
            .collect();
        linear_stack(g, &layers, x)
    }
}

/// Affine layers with tanh between them and nothing after the last.
pub fn linear_stack(g: &mut Graph, layers: &[(Var, Var)], x: Var) -> Result<Var, NnError> {
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let z = g.matmul(h, w)?;
        h = g.add_row(z, b)?;
        if i + 1 < layers.len() {
            h = g.tanh(h);
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use alloc::vec;

    #[test]
    fn zero_network_outputs_zero() {
        let mut store = ParamStore::new();
        let mlp = Mlp::init(
            MlpSpec::new(vec![3, 4, 2], 1.0).unwrap(),
            &mut store,
            "m",
            &mut DetRng::new(0, 0),
        );
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.25, -9.0]).unwrap());
        let y = mlp.forward(&mut g, &store, x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut g = Graph::new();
        let data = vec![0.3, -1.5, 2.0, 7.0, 0.0, -0.1];
        let x = g.input(Tensor::matrix(2, 3, data.clone()).unwrap());
        let eye = g.input(Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
        let b = g.input(Tensor::zeros(&[3]));
        let y = linear_stack(&mut g, &[(eye, b)], x).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);
    }

    #[test]
    fn small_net_matches_scalar_evaluation() {
        let mut store = ParamStore::new();
        let mlp = Mlp::init(
            MlpSpec::new(vec![2, 3, 1], 1.0).unwrap(),
            &mut store,
            "m",
            &mut DetRng::new(9, 0),
        );
        let mut rng = DetRng::new(10, 0);
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.uniform_in(-1.0, 1.0));
        }
        let w0 = store.get(store.id_of("m.0.weight").unwrap()).data().to_vec();
        let b0 = store.get(store.id_of("m.0.bias").unwrap()).data().to_vec();
        let w1 = store.get(store.id_of("m.1.weight").unwrap()).data().to_vec();
        let b1 = store.get(store.id_of("m.1.bias").unwrap()).data().to_vec();
        // Step-through evaluation, weights stored [in, out].
        let x = [1.0, -1.0];
        let mut expected = b1[0];
        for j in 0..3 {
            let pre = x[0] * w0[j] + x[1] * w0[3 + j] + b0[j];
            expected += math::tanh(pre) * w1[j];
        }
        let mut g = Graph::new();
        let xv = g.input(Tensor::matrix(1, 2, x.to_vec()).unwrap());
        let y = mlp.forward(&mut g, &store, xv).unwrap();
        assert!((g.value(y).item() - expected).abs() < 1e-14);
    }

    #[test]
    fn input_width_mismatch_is_reported() {
        let mut store = ParamStore::new();
        let mlp = Mlp::init(
            MlpSpec::new(vec![3, 4, 2], 1.0).unwrap(),
            &mut store,
            "m",
            &mut DetRng::new(0, 0),
        );
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 5]));
        assert!(matches!(
            mlp.forward(&mut g, &store, x),
            Err(NnError::ShapeMismatch { op: "mlp", .. })
        ));
    }

    #[test]
    fn spec_requires_hidden_layer() {
        assert!(MlpSpec::new(vec![3, 2], 1.0).is_err());
    }
}
