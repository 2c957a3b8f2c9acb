use proptest::prelude::*;
use tending_core::nn::{AttentionEncoder, AttentionEncoderSpec, Graph, ParamStore, Tensor};
use tending_core::rng::DetRng;

fn encoder(seed: u64) -> (AttentionEncoder, ParamStore) {
    let mut store = ParamStore::new();
    let spec = AttentionEncoderSpec::new(9, 16, 4, 8).unwrap();
    let enc = AttentionEncoder::init(spec, &mut store, "enc", &mut DetRng::new(seed, 0));
    (enc, store)
}

fn pooled(enc: &AttentionEncoder, store: &ParamStore, tokens: &[f64], mask: &[bool]) -> Vec<f64> {
    let t = mask.len();
    let mut g = Graph::new();
    let x = g.input(Tensor::matrix(t, 9, tokens.to_vec()).unwrap());
    let y = enc.forward(&mut g, store, x, 1, t, mask).unwrap();
    g.value(y).data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pooled_output_ignores_token_order(seed in any::<u64>(), n in 1usize..9) {
        let (enc, store) = encoder(seed);
        let mut rng = DetRng::new(seed, 1);
        let tokens: Vec<f64> = (0..n * 9).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i == 0 || rng.bernoulli(0.7)).collect();
        let base = pooled(&enc, &store, &tokens, &mask);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let permuted: Vec<f64> = order.iter().flat_map(|&i| tokens[i * 9..(i + 1) * 9].to_vec()).collect();
        let pmask: Vec<bool> = order.iter().map(|&i| mask[i]).collect();
        let out = pooled(&enc, &store, &permuted, &pmask);
        for (a, b) in base.iter().zip(&out) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn softmax_rows_normalized_and_masked(seed in any::<u64>(), n in 2usize..8) {
        let (enc, store) = encoder(seed);
        let mut rng = DetRng::new(seed, 2);
        let tokens: Vec<f64> = (0..n * 9).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let mask: Vec<bool> = (0..n).map(|i| i == 0 || rng.bernoulli(0.5)).collect();
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(n, 9, tokens).unwrap());
        enc.forward(&mut g, &store, x, 1, n, &mask).unwrap();
        let w = g.last_attention_weights().unwrap();
        for row in w.chunks(n) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            for (k, &m) in mask.iter().enumerate() {
                if !m {
                    prop_assert_eq!(row[k], 0.0);
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let (enc, store) = encoder(seed);
        let mut rng = DetRng::new(seed, 3);
        let tokens: Vec<f64> = (0..5 * 9).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let mask = [true; 5];
        prop_assert_eq!(pooled(&enc, &store, &tokens, &mask), pooled(&enc, &store, &tokens, &mask));
    }
}

#[test]
fn finite_difference_suite_small() {
    let report = tending_core::nn::gradcheck::run(10, 17).unwrap();
    assert!(report.passed(), "{report:?}");
}
