use std::path::Path;

use tending_cli::RunConfig;
use tending_core::marl::Variant;
use tending_core::ScenarioConfig;

fn load(name: &str) -> RunConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn shipped_configs_load() {
    let smoke = load("smoke.json");
    assert_eq!(smoke.scenario, ScenarioConfig::reduced());
    assert_eq!(smoke.variant, Variant::FlatMlp);
    assert_eq!(load("default.json").variant, Variant::Attention);
    assert_eq!(load("compare.json").scenario, ScenarioConfig::default());
}
