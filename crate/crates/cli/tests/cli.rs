//! End-to-end checks of the binary: payload reproducibility across thread
//! counts, golden values, CSV shape, and error exit codes.

use std::process::{Command, Output};

fn genergy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genergy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn payload_bytes(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("valid json");
    serde_json::to_string(&v["payload"]).unwrap()
}

#[test]
fn seeded_payloads_are_byte_identical_across_threads() {
    let base = [
        "mc-estimate",
        "--group",
        "sym:4",
        "--k",
        "3",
        "--statistic",
        "ENERGY_AA",
        "--trials",
        "5000",
        "--seed",
        "9",
        "--histogram",
    ];
    let one = payload_bytes(&genergy(&[&base[..], &["--threads", "1"]].concat()));
    let four = payload_bytes(&genergy(&[&base[..], &["--threads", "4"]].concat()));
    let rerun = payload_bytes(&genergy(&[&base[..], &["--threads", "2"]].concat()));
    assert_eq!(one, four);
    assert_eq!(one, rerun);
}

#[test]
fn dominance_payload_reproducible() {
    let base = [
        "dominance",
        "--group",
        "cyclic:101",
        "--k",
        "6",
        "--trials",
        "400",
        "--seed",
        "11",
    ];
    let a = payload_bytes(&genergy(&[&base[..], &["--threads", "1"]].concat()));
    let b = payload_bytes(&genergy(&[&base[..], &["--threads", "8"]].concat()));
    assert_eq!(a, b);
}

#[test]
fn group_info_golden_values() {
    let out = genergy(&["group-info", "--group", "gl2:3"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = &v["payload"];
    assert_eq!(p["kappa"], 8);
    assert_eq!(p["epsilon"], 6);
    assert_eq!(p["iota"], 14);
    assert_eq!(p["order"], 48);
    assert_eq!(p["q_counts_AA"]["Q5"], 48);
}

#[test]
fn exact_expectation_golden_values() {
    let out = genergy(&[
        "exact-expectation",
        "--group",
        "sym:3",
        "--k",
        "2",
        "--variant",
        "AAINV",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["payload"]["methods"]["BINOMIAL_Q"], "36/5");
    assert_eq!(v["payload"]["methods"]["CLOSED_FORM_CORRECTED"], "36/5");

    let out = genergy(&[
        "exact-expectation",
        "--group",
        "sym:3",
        "--k",
        "2",
        "--variant",
        "AA",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["payload"]["methods"]["BINOMIAL_Q"], "28/5");
    assert_eq!(v["payload"]["methods"]["CLOSED_FORM_UNCORRECTED"], "6/1");
    assert_eq!(v["payload"]["discrepancy"], "2/5");
}

#[test]
fn model_expectation_through_cli() {
    let out = genergy(&[
        "exact-expectation",
        "--model",
        "lattice:1",
        "--radius",
        "5000",
        "--k",
        "2",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["payload"]["methods"]["BINOMIAL_Q"], "6/1");
}

#[test]
fn ball_densities_csv_header() {
    let out = genergy(&[
        "ball-densities",
        "--model",
        "free:2",
        "--nmax",
        "3",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,ball,cp,cp_exactness,sq,iota,growth_ratio"
    );
    assert_eq!(lines.count(), 4);
    assert!(text.contains("exact"));
}

#[test]
fn out_flag_writes_file() {
    let path = std::env::temp_dir().join("genergy_out_test.json");
    let _ = std::fs::remove_file(&path);
    let out = genergy(&["thin-basis", "--n", "1000", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["subcommand"], "thin-basis");
    assert_eq!(v["payload"]["square_count"], 63);
    let _ = std::fs::remove_file(&path);
}

#[test]
fn error_exit_codes_are_distinct() {
    let bad_spec = genergy(&["group-info", "--group", "widget:7"]);
    assert_eq!(bad_spec.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&bad_spec.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "spec_parse");

    let bad_arg = genergy(&[
        "exact-expectation",
        "--group",
        "cyclic:6",
        "--k",
        "9",
        "--variant",
        "AA",
    ]);
    assert_eq!(bad_arg.status.code(), Some(4));

    let capped = genergy(&[
        "brute-force",
        "--group",
        "ea2:16",
        "--k",
        "8",
        "--statistic",
        "ENERGY_AA",
    ]);
    assert_eq!(capped.status.code(), Some(5));

    let unknown = genergy(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn cap_override_flags_apply() {
    // Default cap rejects C(30, 8); raising it makes the run feasible.
    let denied = genergy(&[
        "brute-force",
        "--group",
        "cyclic:30",
        "--k",
        "8",
        "--statistic",
        "SIZE_A2",
        "--cap-brute",
        "1000",
    ]);
    assert_eq!(denied.status.code(), Some(5));
    let allowed = genergy(&[
        "brute-force",
        "--group",
        "cyclic:30",
        "--k",
        "3",
        "--statistic",
        "SIZE_A2",
    ]);
    assert!(allowed.status.success());
}

#[test]
fn validate_battery_passes() {
    let out = genergy(&["validate", "--max-k", "2"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["payload"]["failed"], 0);
    assert!(v["payload"]["passed"].as_u64().unwrap() > 100);
}

#[test]
fn energy_subcommand_reports_histogram_identities() {
    let out = genergy(&[
        "energy",
        "--group",
        "cyclic:100",
        "--A",
        "0,1,3,7",
        "--pair",
        "AA",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = &v["payload"];
    assert_eq!(p["report"]["energy"], 28);
    assert_eq!(p["product_set_size"], 10);
    assert_eq!(p["cs_growth_bound"], "64/7");
    let hist = p["report"]["representation_histogram"].as_object().unwrap();
    let total: u64 = hist.values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 16);
}
