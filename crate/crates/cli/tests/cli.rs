// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sgxsim");

/// Scenario parameters small enough for a quick run.
fn small_params(name: &str) -> &'static str {
    match name {
        "eddsa-pf" | "eddsa-bspm" | "eddsa-tspm" => "bits = 48",
        "elgamal-pp" => "bits = 64",
        "hunspell-bspm" | "hunspell-htspm" => "queries = 12\ndict_words = 500\ndict_pages = 40\nbuckets = 128",
        "bloom-tspm" => "members = 100\nqueries = 60\ncalibration_queries = 40",
        "gap-cachedram" => "invocations = 200",
        "drama-hist" => "probes = 2000",
        "tlb-binsearch" => "searches = 10",
        _ => "",
    }
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn sgxsim(args: &[&str], cfg: Option<&Path>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("SGXSIM_CONFIG");
    if let Some(p) = cfg {
        c.env("SGXSIM_CONFIG", p);
    }
    c.output().expect("binary runs")
}

/// Runs `name` with shrunk parameters and returns the main report text.
fn run_small(name: &str, seed: &str, format: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, format!("schema_version = 1\n\n[scenario]\n{}\n", small_params(name))).unwrap();
    let out = dir.path().join("out");
    let o =
        sgxsim(&["--scenario", name, "--seed", seed, "--format", format, "--out", out.to_str().unwrap()], Some(&cfg));
    assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(out.join(format!("{name}.{format}"))).unwrap()
}

fn check_golden(file: &str, got: &str) {
    let path = golden_dir().join(file);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, got).unwrap();
        return;
    }
    let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(got, want, "{file} differs from golden copy; rerun with UPDATE_GOLDEN=1 after review");
}

#[test]
fn rowrange_csv_matches_golden() {
    check_golden("rowrange-table.csv", &run_small("rowrange-table", "1", "csv"));
}

#[test]
fn granularity_json_matches_golden() {
    check_golden("granularity-table.json", &run_small("granularity-table", "1", "json"));
}

#[test]
fn eddsa_tspm_json_matches_golden() {
    check_golden("eddsa-tspm.json", &run_small("eddsa-tspm", "7", "json"));
}

#[test]
fn binsearch_json_matches_golden() {
    check_golden("tlb-binsearch.json", &run_small("tlb-binsearch", "3", "json"));
}

#[test]
fn every_scenario_emits_the_report_schema() {
    let list = sgxsim(&["--list"], None);
    let names: Vec<String> =
        String::from_utf8(list.stdout).unwrap().lines().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(names.len(), 12);
    let schema: Value = serde_json::from_str(&fs::read_to_string(golden_dir().join("schema.json")).unwrap()).unwrap();
    let required: Vec<&str> = schema["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in &names {
        let v: Value = serde_json::from_str(&run_small(name, "1", "json")).unwrap();
        let obj = v.as_object().unwrap();
        for key in &required {
            assert!(obj.contains_key(*key), "{name} report lacks {key}");
        }
        assert_eq!(v["scenario"], name.as_str());
        let band = v["band"].as_str().unwrap();
        assert!(["none", "modest", "high"].contains(&band));
    }
}

#[test]
fn same_seed_same_bytes() {
    for name in ["eddsa-tspm", "gap-cachedram"] {
        assert_eq!(run_small(name, "7", "json"), run_small(name, "7", "json"));
        assert_eq!(run_small(name, "7", "csv"), run_small(name, "7", "csv"));
    }
}

#[test]
fn histogram_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "schema_version = 1\n[scenario]\nprobes = 500\n").unwrap();
    let out = dir.path().join("o");
    let o =
        sgxsim(&["--scenario", "drama-hist", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    let h = fs::read_to_string(out.join("drama-hist.hist.csv")).unwrap();
    let mut lines = h.lines();
    assert_eq!(lines.next(), Some("bin_left,count"));
    let total: u64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 500);
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let o = sgxsim(&["--scenario", "flush-reload"], None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scenario"));

    let o = sgxsim(&["--scenario", "rowrange-table", "--config", "/nonexistent/sgxsim.toml"], None);
    assert!(!o.status.success());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "schema_version = 1\ncores = 0\n").unwrap();
    let o = sgxsim(&["--scenario", "rowrange-table", "--config", cfg.to_str().unwrap()], None);
    assert!(!o.status.success());

    let o = sgxsim(&["--scenario", "rowrange-table", "--format", "xml"], None);
    assert!(!o.status.success());

    let o = sgxsim(&["--scenario", "rowrange-table", "--preset", "laptop"], None);
    assert!(!o.status.success());
}

#[test]
fn testbed_preset_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgxsim(
        &[
            "--scenario",
            "granularity-table",
            "--preset",
            "testbed",
            "--format",
            "csv",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("granularity-table.csv")).unwrap();
    let acc: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(acc, ["2MB", "128KB", "16KB", "4KB", "4KB", "4KB", "1KB", "64B"]);
}
