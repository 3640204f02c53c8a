use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_genbound");

const CONFIG: &str = r#"{
  "seed": 3,
  "scenarios": [
    {
      "id": "gibbs-binary",
      "instances": {"probs": [0.5, 0.5]},
      "hypotheses": {"count": 2},
      "loss": "zero-one",
      "algorithm": "gibbs:1",
      "n_sweep": [1, 2, 3],
      "divergences": ["kl", "chi2", "pnormp:3"]
    }
  ]
}"#;

fn genbound(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).env("GENBOUND_THREADS", "1").output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let (code, _, stderr) = genbound(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{stderr}");
        assert!(out.join("timing.json").exists());
        outputs.push((
            fs::read_to_string(out.join("reports.csv")).unwrap(),
            fs::read_to_string(out.join("manifest.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = &outputs[0].0;
    assert!(csv.starts_with("scenario,n,divergence,gen_true,H_value,dual_moment,bound,slack,vacuous,tol\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn json_reports_go_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let (code, stdout, _) = genbound(&["run", "--config", &config, "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 9);
}

#[test]
fn sweep_writes_a_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("sweep");
    let (code, _, stderr) = genbound(&["sweep", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.starts_with("scenario,n,divergence,gen_true,bound,rate_factor"));
}

#[test]
fn verify_manifests_repeat_byte_for_byte() {
    let (code_a, a, _) = genbound(&["verify", "--suite", "ghost", "--seed", "7"]);
    let (code_b, b, _) = genbound(&["verify", "--suite", "ghost", "--seed", "7"]);
    assert_eq!((code_a, code_b), (0, 0));
    assert_eq!(a, b);
    let m: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(m["passed"], true);
    assert_eq!(m["seed"], 7);
    let (_, c, _) = genbound(&["verify", "--suite", "ghost", "--seed", "8"]);
    let other: serde_json::Value = serde_json::from_str(&c).unwrap();
    assert_ne!(m["config_hash"], other["config_hash"]);
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = genbound(&["verify", "--suite", "nonsense"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("error"));
    let config = write_config(dir.path(), r#"{"scenarios": [{"id": "x"}]}"#);
    assert_eq!(genbound(&["run", "--config", &config]).0, 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(genbound(&["run", "--config", missing.to_str().unwrap()]).0, 2);
}

#[test]
fn uncomputable_cells_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"scenarios": [{"id": "x", "instances": {"probs": [0.5, 0.5]}, "hypotheses": {"count": 2},
            "loss": "zero-one", "algorithm": "constant", "n": 2, "divergences": ["kl", "wasserstein"]}]}"#,
    );
    let (code, stdout, stderr) = genbound(&["run", "--config", &config]);
    assert_eq!(code, 2, "{stderr}");
    assert_eq!(stdout.lines().count(), 2);
    assert!(stderr.contains("wasserstein"));
}
