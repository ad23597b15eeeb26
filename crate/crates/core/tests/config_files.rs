use std::path::{Path, PathBuf};

use markov_pinning::config::ExperimentConfig;
use markov_pinning::experiment::{Scenario, Setup};
use proptest::prelude::*;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_mobile_config_equals_the_preset() {
    let (cfg, _) = ExperimentConfig::load(&configs_dir().join("mobile-spatial.toml")).unwrap();
    assert_eq!(cfg, ExperimentConfig::mobile_spatial());
}

#[test]
fn shipped_slow_config_resolves_like_the_preset() {
    let (cfg, base) = ExperimentConfig::load(&configs_dir().join("slow-switching.toml")).unwrap();
    let from_file = Setup::new(cfg, &base).unwrap();
    let preset = Setup::new(ExperimentConfig::slow_switching(), Path::new(".")).unwrap();
    let (Scenario::Switched(a), Scenario::Switched(b)) = (&from_file.scenario, &preset.scenario) else {
        panic!("both configs describe switched networks");
    };
    assert_eq!(a.data.topology, b.data.topology);
    assert_eq!(a.data.embedded, b.data.embedded);
    assert_eq!(a.rates, b.rates);
    assert_eq!(from_file.config.seed, preset.config.seed);
    assert_eq!(from_file.config.integration, preset.config.integration);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn toml_round_trip(
        mobile in any::<bool>(),
        seed in any::<u64>(),
        runs in 1..100usize,
        h in 1e-5..1e-1f64,
        kappa in 0.1..20.0f64,
        delta in 1e-6..1e-2f64,
    ) {
        let mut cfg = if mobile { ExperimentConfig::mobile_spatial() } else { ExperimentConfig::slow_switching() };
        cfg.seed = seed;
        cfg.runs = runs;
        cfg.integration.h = h;
        cfg.network.kappa = kappa;
        cfg.certificates.delta = delta;
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }
}
