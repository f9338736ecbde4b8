use std::path::Path;
use std::process::{Command, Output};

fn activereg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activereg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn gen(dir: &Path, n: &str, p: &str, noise: &str, seed: &str) {
    let out = activereg(
        dir,
        &[
            "gen", "--n", n, "--p", p, "--noise", noise, "--seed", seed, "--out", "data.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn noiseless_pipeline_recovers_target() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "100", "3", "0", "7");
    let out = activereg(dir.path(), &["pipeline", "--data", "data.csv", "--epsilon", "1"]);
    let report = json(&out);
    assert!(report["rmse"].as_f64().unwrap() <= 1e-6, "{report}");
    assert_eq!(report["provenance"]["tool"], "activereg");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("config:") && stderr.contains("\"c0\":3.0"), "{stderr}");
}

#[test]
fn gen_writes_provenance_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "20", "2", "0.5", "3");
    let text = std::fs::read_to_string(dir.path().join("data.csv.provenance.json")).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(meta["synth"]["seed"], 3);
    assert_eq!(meta["synth"]["w_star"].as_array().unwrap().len(), 2);
    assert_eq!(meta["provenance"]["args"][0], "gen");
}

#[test]
fn select_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "300", "4", "0.5", "1");
    let args = [
        "select",
        "--data",
        "data.csv",
        "--epsilon",
        "0.5",
        "--seed",
        "9",
        "--out",
        "sel.json",
    ];
    assert!(activereg(dir.path(), &args).status.success());
    let first = std::fs::read(dir.path().join("sel.json")).unwrap();
    assert!(activereg(dir.path(), &args).status.success());
    let second = std::fs::read(dir.path().join("sel.json")).unwrap();
    assert_eq!(first, second);
    let sel: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(sel["strategy"], "bss");
    assert_eq!(sel["c0"], 3.0);
}

#[test]
fn select_fit_eval_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "400", "3", "0.3", "2");
    let piped = json(&activereg(
        dir.path(),
        &[
            "pipeline",
            "--data",
            "data.csv",
            "--epsilon",
            "0.5",
            "--seed",
            "4",
            "--model-out",
            "pm.json",
        ],
    ));
    // Scoring the saved model on the same split reproduces the pipeline RMSE.
    let pool_eval = json(&activereg(
        dir.path(),
        &["eval", "--data", "data.csv", "--model", "pm.json", "--split-seed", "4"],
    ));
    assert!((pool_eval["rmse"].as_f64().unwrap() - piped["rmse"].as_f64().unwrap()).abs() <= 1e-12);

    assert!(activereg(
        dir.path(),
        &["select", "--data", "data.csv", "--epsilon", "0.5", "--out", "s.json"]
    )
    .status
    .success());
    assert!(activereg(
        dir.path(),
        &["fit", "--data", "data.csv", "--selection", "s.json", "--out", "m.json"]
    )
    .status
    .success());
    let full = json(&activereg(
        dir.path(),
        &["eval", "--data", "data.csv", "--model", "m.json"],
    ));
    assert_eq!(full["rows"], 400);
    assert!(full["rmse"].as_f64().unwrap() < 0.5);
}

#[test]
fn sweep_emits_one_row_per_setting_with_decreasing_rmse() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "2000", "10", "0.5", "0");
    let out = activereg(
        dir.path(),
        &[
            "sweep",
            "--data",
            "data.csv",
            "--eps-list",
            "1,0.1,0.01",
            "--seeds",
            "10",
            "--format",
            "markdown",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| setting"))
        .map(|l| l.trim_matches('|').split('|').map(str::trim).collect())
        .collect();
    assert_eq!(rows.len(), 4, "{text}");
    assert_eq!(rows[0][0], "full");
    let rmse: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let std: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    for i in 1..3 {
        assert!(rmse[i + 1] <= rmse[i] + std[i].hypot(std[i + 1]), "{text}");
    }
    assert!(text.contains("<!-- activereg"));
}

#[test]
fn ksweep_writes_json_and_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "600", "3", "0.5", "5");
    let out = activereg(
        dir.path(),
        &[
            "ksweep",
            "--data",
            "data.csv",
            "--eps-list",
            "1,0.5",
            "--seeds",
            "3",
            "--format",
            "json",
            "--out",
            "k.json",
            "--plot-csv",
            "k.csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("k.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
    assert_eq!(report["provenance"]["args"][0], "ksweep");
    let plot = std::fs::read_to_string(dir.path().join("k.csv")).unwrap();
    assert!(plot.starts_with("k,strategy,rmse_mean,rmse_std\n"));
    assert_eq!(plot.lines().count(), 5);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = activereg(
        dir.path(),
        &["verify", "--suite", "linalg", "--trials", "20", "--out", "v.json"],
    );
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout)
        .lines()
        .all(|l| l.starts_with("PASS")));
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
    assert_eq!(saved["suite"], "linalg");

    // Ten barrier runs include mid-sandwich lower-half violations.
    let bad = activereg(dir.path(), &["verify", "--suite", "sampler", "--trials", "10"]);
    assert_eq!(bad.status.code(), Some(4), "{}", String::from_utf8_lossy(&bad.stdout));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL mid_sandwich"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(activereg(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(activereg(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(
        activereg(dir.path(), &["select", "--data", "missing.csv", "--epsilon", "0.5"])
            .status
            .code(),
        Some(2)
    );
    gen(dir.path(), "50", "2", "0.1", "1");
    assert_eq!(
        activereg(dir.path(), &["select", "--data", "data.csv", "--epsilon", "2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        activereg(
            dir.path(),
            &["select", "--data", "data.csv", "--target", "nope", "--epsilon", "0.5"]
        )
        .status
        .code(),
        Some(2)
    );
    // Five rows over six quadratic basis functions cannot be whitened.
    std::fs::write(
        dir.path().join("tiny.csv"),
        "a,b,y\n1,2,3\n2,1,0\n3,5,1\n0,1,2\n4,4,4\n",
    )
    .unwrap();
    let out = activereg(
        dir.path(),
        &["select", "--data", "tiny.csv", "--epsilon", "0.5", "--map", "quadratic"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
