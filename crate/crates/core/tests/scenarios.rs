// SPDX-License-Identifier: Apache-2.0

use serde_json::json;

use sgxsim_core::analysis::Band;
use sgxsim_core::attacks::Registry;
use sgxsim_core::config::SimConfig;
use sgxsim_core::scenarios::{ScenarioInput, ScenarioRegistry};
use sgxsim_core::SimError;

fn small(name: &str) -> serde_json::Value {
    match name {
        "eddsa-pf" | "eddsa-bspm" | "eddsa-tspm" => json!({"bits": 32}),
        "elgamal-pp" => json!({"bits": 40}),
        "gap-cachedram" => json!({"invocations": 300}),
        "drama-hist" => json!({"probes": 4000}),
        "hunspell-bspm" | "hunspell-htspm" => json!({"queries": 10}),
        "bloom-tspm" => json!({"queries": 100, "calibration_queries": 60}),
        "tlb-binsearch" => json!({"searches": 10}),
        _ => json!({}),
    }
}

#[test]
fn registries_list_everything() {
    let s: Vec<_> = ScenarioRegistry::default().names().collect();
    assert_eq!(s.len(), 12);
    let a: Vec<_> = Registry::default().names().collect();
    assert_eq!(a, ["b-spm", "cache-dram", "drama", "ht-spm", "page-fault", "prime-probe", "t-spm", "tlb-probe"]);
}

#[test]
fn every_scenario_runs_small_and_serializes() {
    let reg = ScenarioRegistry::default();
    for name in reg.names() {
        let input = ScenarioInput::new(SimConfig::default(), 5).with_params(small(name));
        let r = reg.run(name, &input).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(r.scenario, name);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["seed"], 5);
        assert!(r.to_csv().is_ok(), "{name} csv");
        assert!(r.report.slowdown > 0.0, "{name} slowdown");
    }
}

#[test]
fn unknown_names_are_rejected() {
    let reg = ScenarioRegistry::default();
    let input = ScenarioInput::new(SimConfig::default(), 1);
    assert!(matches!(reg.run("nope", &input), Err(SimError::Unknown { .. })));
    let bad = input.clone().with_params(json!({"attack": "nope"}));
    assert!(reg.run("eddsa-pf", &bad).is_err());
}

#[test]
fn unknown_params_are_rejected() {
    let input = ScenarioInput::new(SimConfig::default(), 1).with_params(json!({"bitz": 8}));
    assert!(ScenarioRegistry::default().run("eddsa-tspm", &input).is_err());
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = SimConfig::default();
    cfg.cache.l3.sets = 1000;
    let input = ScenarioInput::new(cfg, 1);
    assert!(matches!(ScenarioRegistry::default().run("granularity-table", &input), Err(SimError::InvalidConfig(_))));
}

#[test]
fn stealthy_attacks_band_none() {
    let reg = ScenarioRegistry::default();
    for name in ["hunspell-htspm", "elgamal-pp", "gap-cachedram"] {
        let input = ScenarioInput::new(SimConfig::default(), 9).with_params(small(name));
        let r = reg.run(name, &input).unwrap();
        assert_eq!(r.report.aex_count, 0, "{name}");
        assert_eq!(r.report.band, Band::None, "{name}");
    }
}

#[test]
fn page_fault_attack_bands_high() {
    let input = ScenarioInput::new(SimConfig::default(), 9).with_params(small("eddsa-pf"));
    let r = ScenarioRegistry::default().run("eddsa-pf", &input).unwrap();
    assert!(r.report.aex_count > 0);
    assert_eq!(r.report.band, Band::High);
}

#[test]
fn seeds_change_reports() {
    let reg = ScenarioRegistry::default();
    let run = |seed| {
        reg.run("eddsa-tspm", &ScenarioInput::new(SimConfig::default(), seed).with_params(small("eddsa-tspm")))
            .unwrap()
            .to_json()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}
