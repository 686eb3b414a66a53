//! End-to-end tests of the scenario runner binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nhflow"))
}

#[test]
fn list_names_every_scenario_once() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "suslov",
        "suslov_fk",
        "eps_so4_cartan",
        "eps_chain",
        "veselova3",
        "veselova_n",
        "neumann_compare",
        "knorrer",
        "reconstruction",
        "spheroconic",
        "maupertuis",
        "lagrange_top",
        "lplusr_generic",
        "chaplygin_sphere",
        "spherical_support",
        "lplusr_limit",
    ] {
        let hits = text
            .lines()
            .filter(|l| l.split_whitespace().next() == Some(name))
            .count();
        assert_eq!(hits, 1, "scenario {name} listed {hits} times");
    }
}

#[test]
fn identical_runs_are_byte_identical_modulo_timestamp() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    for dir in [&dir1, &dir2] {
        let out = bin()
            .args([
                "run",
                "--scenario",
                "veselova3",
                "--seed",
                "7",
                "--t-final",
                "5",
                "--output",
                dir.path().to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv1 = std::fs::read(dir1.path().join("veselova3.csv")).unwrap();
    let csv2 = std::fs::read(dir2.path().join("veselova3.csv")).unwrap();
    assert_eq!(csv1, csv2, "CSV output is not deterministic");

    let strip = |p: &std::path::Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v["provenance"]["timestamp_unix_s"] = serde_json::Value::Null;
        // The echoed output directory differs between the two temp dirs.
        v["provenance"]["config"]["output"]["dir"] = serde_json::Value::Null;
        v
    };
    assert_eq!(
        strip(&dir1.path().join("veselova3_report.json")),
        strip(&dir2.path().join("veselova3_report.json")),
        "report differs beyond the timestamp"
    );
}

#[test]
fn report_is_self_contained_and_passing() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            "--scenario",
            "knorrer",
            "--t-final",
            "5",
            "--output",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("knorrer_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["scenario"], "knorrer");
    assert_eq!(report["pass"], true);
    assert_eq!(report["provenance"]["seed"], 42);
    assert!(report["checks"].as_array().unwrap().len() >= 4);
}

#[test]
fn unknown_keys_and_missing_params_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown top-level key.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"scenario": "veselova_n", "typo_key": 1}"#).unwrap();
    let out = bin()
        .args(["run", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));

    // Missing required parameter inside params: the key is named.
    let missing = dir.path().join("missing.json");
    std::fs::write(
        &missing,
        r#"{"scenario": "maupertuis", "params": {"alpha1": 1.0, "c": 0.0}}"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config error"), "stderr: {err}");
    assert!(err.contains('a'), "missing key not named: {err}");

    // Unknown scenario name.
    let out = bin()
        .args(["run", "--scenario", "not_a_scenario"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Scenario flag conflicting with the config file.
    let conflict = dir.path().join("conflict.json");
    std::fs::write(&conflict, r#"{"scenario": "veselova3"}"#).unwrap();
    let out = bin()
        .args([
            "run",
            "--scenario",
            "veselova_n",
            "--config",
            conflict.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_checks_exit_nonzero_with_report() {
    let dir = tempfile::tempdir().unwrap();
    // A horizon too short to accumulate the required matched arc length.
    let out = bin()
        .args([
            "run",
            "--scenario",
            "maupertuis",
            "--t-final",
            "0.05",
            "--output",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("maupertuis_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn config_file_drives_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "scenario": "veselova_n",
            "seed": 9,
            "params": {"a": [1.0, 2.0, 3.0]},
            "integrator": {"t_final": 5.0, "dt": 1e-3},
            "output": {"dir": "OUTDIR", "write_csv": true}
        }"#
        .replace("OUTDIR", dir.path().join("results").to_str().unwrap())
        .as_bytes(),
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("results/veselova_n_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["provenance"]["seed"], 9);
    assert_eq!(report["provenance"]["config"]["params"]["a"][2], 3.0);
    // CSV columns follow the chart layout: q then p, then channels.
    let csv =
        std::fs::read_to_string(dir.path().join("results/veselova_n.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,q_1,q_2,q_3,p_1,p_2,p_3"));
}
