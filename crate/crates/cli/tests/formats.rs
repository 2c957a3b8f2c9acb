use proptest::prelude::*;
use tending_cli::checkpoint;
use tending_cli::metrics::{read_csv, write_csv, MetricsRow, METRICS_COLUMNS};
use tending_cli::plot::{render_svg, Series};
use tending_core::env::{Scenario, ScenarioConfig};
use tending_core::marl::{NetConfig, PolicyBundle, Variant};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

prop_compose! {
    fn metrics_row()(step in any::<u64>(), update in any::<u64>(), v in prop::array::uniform8(finite())) -> MetricsRow {
        MetricsRow {
            step,
            update,
            mean_return: v[0],
            deliveries: v[1],
            collisions: v[2],
            policy_loss: v[3],
            value_loss: v[4],
            entropy: v[5],
            clip_frac: v[6],
            approx_kl: v[7],
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_csv_parses_back_bit_exact(rows in prop::collection::vec(metrics_row(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.csv");
        write_csv(&p, &METRICS_COLUMNS, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        prop_assert!(text.starts_with("step,update,mean_return,deliveries,collisions,policy_loss,value_loss,entropy,clip_frac,approx_kl\n"));
        prop_assert!(!text.contains('\r'));
        let back: Vec<MetricsRow> = read_csv(&p).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.mean_return.to_bits(), b.mean_return.to_bits());
            prop_assert_eq!(a.approx_kl.to_bits(), b.approx_kl.to_bits());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn svg_is_a_pure_function(rows in prop::collection::vec((0u64..1_000_000, -1e3f64..1e3), 1..30)) {
        let mk = |label: &str| Series {
            label: label.into(),
            points: rows.iter().map(|&(s, r)| (s as f64, [r, r.abs(), r * r])).collect(),
        };
        let series = [mk("ab-mappo"), mk("mappo")];
        let a = render_svg(&series);
        prop_assert_eq!(&a, &render_svg(&series));
        prop_assert_eq!(a.matches("<polyline").count(), 6);
        prop_assert!(!a.contains("NaN"));
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact(seed in any::<u64>(), attention in any::<bool>()) {
        let sc = Scenario::new(ScenarioConfig::default()).unwrap();
        let variant = if attention { Variant::Attention } else { Variant::FlatMlp };
        let net = NetConfig { hidden: 8, embed_dim: 8, heads: 2, ..NetConfig::default() };
        let bundle = PolicyBundle::new(&sc, variant, net, seed).unwrap();
        let bytes = checkpoint::encode(&bundle, sc.config());
        let loaded = checkpoint::decode(&bytes, &sc).unwrap();
        prop_assert_eq!(loaded.variant(), variant);
        prop_assert_eq!(checkpoint::encode(&loaded, sc.config()), bytes.clone());
        for cut in [0, 3, 8, 40, 57, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(checkpoint::decode(&bytes[..cut], &sc).is_err());
        }
    }
}
