// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use sctkit::design::PlacedDesign;
use sctkit::presets;
use sha2::{Digest, Sha256};

fn sctkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sctkit"))
        .current_dir(dir)
        .args(args)
        .env_remove("SCTKIT_CONFIG")
        .env_remove("SCTKIT_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = sctkit(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_the_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "generate", "--preset", "PST_LFLD", "--seed", "4", "-o", "a.json",
        ],
    );
    ok(
        d,
        &[
            "generate", "--preset", "pst_lfld", "--seed", "4", "-o", "b.json",
        ],
    );
    ok(
        d,
        &[
            "generate", "--preset", "PST_LFLD", "--seed", "5", "-o", "c.json",
        ],
    );
    assert_eq!(digest(&d.join("a.json")), digest(&d.join("b.json")));
    assert_ne!(digest(&d.join("a.json")), digest(&d.join("c.json")));
    let m = json(&d.join("a.json.manifest.json"));
    assert_eq!(m["outputs"][0]["sha256"], digest(&d.join("a.json")));
    assert_eq!(m["seeds"]["generate"], 4);
}

#[test]
fn unknown_preset_lists_the_known_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = sctkit(
        dir.path(),
        &["generate", "--preset", "DES_LF", "-o", "x.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in presets::NAMES {
        assert!(err.contains(name), "{err}");
    }
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn analysis_matches_the_target_figures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["generate", "--preset", "AES_LFLD", "-o", "design.json"],
    );
    ok(d, &["analyze", "design.json", "-o", "report.json"]);
    let r = json(&d.join("report.json"));
    assert!((r["clock_mhz"].as_f64().unwrap() - 100.0).abs() < 1e-6);
    assert!(r["estimated_mhz"].as_f64().unwrap() >= 100.0);
    assert!((r["power"]["static"].as_f64().unwrap() / 77.4 - 1.0).abs() < 0.05);
    assert_eq!(r["n_key"], 128);
    ok(d, &["analyze", "design.json", "-o", "again.json"]);
    let mut a = json(&d.join("again.json"));
    let mut b = r.clone();
    a["stage_seconds"] = serde_json::Value::Null;
    b["stage_seconds"] = serde_json::Value::Null;
    assert_eq!(a, b);
}

#[test]
fn empty_design_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["generate", "--preset", "PST_LFLD", "-o", "design.json"],
    );
    let mut design = PlacedDesign::parse_file(d.join("design.json")).unwrap();
    design.instances.clear();
    design.nets.clear();
    design.tags.clear();
    design.write_file(d.join("empty.json")).unwrap();
    let out = sctkit(d, &["analyze", "empty.json", "-o", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_core_cannot_take_the_trojan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["generate", "--preset", "PST_HFHD", "-o", "design.json"],
    );
    ok(d, &["analyze", "design.json", "-o", "report.json"]);
    ok(d, &["design-sct", "report.json", "-o", "sct.json"]);
    let design = PlacedDesign::parse_file(d.join("design.json")).unwrap();
    let ids: Vec<String> = design
        .find_fillers()
        .fillers
        .into_iter()
        .map(|f| f.id)
        .collect();
    design
        .remove_fillers(&ids)
        .unwrap()
        .write_file(d.join("full.json"))
        .unwrap();
    let out = sctkit(
        d,
        &[
            "insert",
            "full.json",
            "sct.json",
            "-o",
            "t.json",
            "--patch",
            "p.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("short by"));
    assert!(!d.join("t.json").exists());
}

#[test]
fn budget_violation_is_infeasible_unless_falling_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["generate", "--preset", "PST_LFLD", "-o", "design.json"],
    );
    ok(d, &["analyze", "design.json", "-o", "report.json"]);
    let out = sctkit(d, &["design-sct", "report.json", "-o", "sct.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power constraint is violated"));
    ok(
        d,
        &[
            "design-sct",
            "report.json",
            "--fallback-reference",
            "-o",
            "sct.json",
        ],
    );
    assert_eq!(json(&d.join("sct.json"))["n_key"], 80);
}

fn trojaned_present(d: &Path) {
    ok(
        d,
        &[
            "generate",
            "--preset",
            "PST_LFHD",
            "--seed",
            "1",
            "-o",
            "design.json",
        ],
    );
    ok(d, &["analyze", "design.json", "-o", "report.json"]);
    ok(
        d,
        &[
            "design-sct",
            "report.json",
            "--fallback-reference",
            "-o",
            "sct.json",
        ],
    );
    ok(
        d,
        &[
            "insert",
            "design.json",
            "sct.json",
            "-o",
            "trojaned.json",
            "--patch",
            "patch.json",
            "--signoff",
            "signoff.json",
        ],
    );
}

const KEY: &str = "0123456789abcdef0123";

#[test]
fn present_pipeline_recovers_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trojaned_present(d);
    assert_eq!(json(&d.join("signoff.json"))["ok"], true);
    ok(
        d,
        &[
            "simulate",
            "trojaned.json",
            "--patch",
            "patch.json",
            "--key",
            KEY,
            "--dies",
            "25",
            "-o",
            "traces",
        ],
    );
    ok(d, &["attack", "traces", "-o", "campaign.json"]);
    let c = json(&d.join("campaign.json"));
    assert_eq!(c["success_rate"], 1.0);
    assert_eq!(c["consensus_key"], KEY);
    assert_eq!(c["rows"].as_array().unwrap().len(), 25);
    ok(
        d,
        &[
            "report",
            "design.json",
            "--trojaned",
            "trojaned.json",
            "--patch",
            "patch.json",
            "-o",
            "tables",
        ],
    );
    for f in [
        "slack_histogram.csv",
        "density_before.csv",
        "density_after.csv",
        "layers.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(d.join("tables").join(f).exists(), "{f}");
    }
}

#[test]
fn short_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trojaned_present(d);
    let out = sctkit(
        d,
        &[
            "simulate",
            "trojaned.json",
            "--patch",
            "patch.json",
            "--key",
            "abc",
            "-o",
            "t",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("80"));
}

#[test]
fn traces_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trojaned_present(d);
    let base = [
        "simulate",
        "trojaned.json",
        "--patch",
        "patch.json",
        "--key",
        KEY,
        "--dies",
        "4",
        "--repeats",
        "2",
    ];
    ok(d, &[&base[..], &["--jobs", "1", "-o", "one"]].concat());
    let out = Command::new(env!("CARGO_BIN_EXE_sctkit"))
        .current_dir(d)
        .args([&base[..], &["-o", "many"]].concat())
        .env("SCTKIT_JOBS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["die000_r0.csv", "die003_r1.csv", "traces.json", "stats.csv"] {
        assert_eq!(
            digest(&d.join("one").join(f)),
            digest(&d.join("many").join(f)),
            "{f}"
        );
    }
}

#[test]
fn heavy_noise_ends_in_ambiguity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trojaned_present(d);
    std::fs::write(d.join("noisy.toml"), "noise_sigma = 60.0\n").unwrap();
    ok(
        d,
        &[
            "simulate",
            "trojaned.json",
            "--patch",
            "patch.json",
            "--key",
            KEY,
            "--dies",
            "2",
            "--config",
            "noisy.toml",
            "-o",
            "t",
        ],
    );
    assert_eq!(
        json(&d.join("t").join("traces.json"))["config"]["noise_sigma"],
        60.0
    );
    let out = sctkit(d, &["attack", "t", "-o", "a.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(json(&d.join("a.json"))["success_rate"].as_f64().unwrap() < 1.0);
}

#[test]
fn calibration_and_monte_carlo_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["calibrate", "-o", "cal.json"]);
    let cal = json(&d.join("cal.json"));
    assert!(cal["max_abs_residual"].as_f64().unwrap() <= 0.10);
    ok(
        d,
        &["generate", "--preset", "PST_LFLD", "-o", "design.json"],
    );
    ok(
        d,
        &[
            "mc",
            "design.json",
            "--samples",
            "500",
            "--csv",
            "hist.csv",
            "-o",
            "mc.json",
        ],
    );
    let mc = json(&d.join("mc.json"));
    assert_eq!(mc["n"], 500);
    assert!(std::fs::read_to_string(d.join("hist.csv"))
        .unwrap()
        .starts_with("static_uW,count"));
    let out = sctkit(
        d,
        &["calibrate", "--tolerance", "0.001", "-o", "tight.json"],
    );
    assert_eq!(out.status.code(), Some(3));
}
