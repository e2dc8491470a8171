use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_delayembed"))
}

fn run_dir(out: &std::process::Output) -> std::path::PathBuf {
    std::path::PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().lines().last().unwrap().trim())
}

#[test]
fn embed_writes_record_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["embed", "--system", "rotation:0.6180339887", "--k", "2", "--points", "10", "--seed", "7"])
        .env("DELAYEMBED_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.starts_with(tmp.path().join("embed")));
    assert!(dir.file_name().unwrap().to_str().unwrap().ends_with("-7"));
    let csv = std::fs::read_to_string(dir.join("embedding.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(csv.lines().next().unwrap(), "chart_0,phi_0,phi_1");
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["experiment"]["k"], 2);
    assert!(record["timing"]["elapsed_seconds"].is_number());
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, "[experiment]\nsystem = \"rotation:0.25\"\nk = 1\npoints = 5\n").unwrap();
    let out = bin()
        .args(["embed", "--config", cfg.to_str().unwrap(), "--points", "3", "--out", tmp.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(run_dir(&out).join("embedding.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn zero_k_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["embed", "--k", "0"]).env("DELAYEMBED_OUT", tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`k`"));
}

#[test]
fn repeated_runs_match_outside_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["lyapunov", "--n", "100", "--orbit", "200"];
    let read = |o: &std::process::Output| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run_dir(o).join("record.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        (v, std::fs::read(run_dir(o).join("steps.csv")).unwrap())
    };
    let a = bin().args(args).env("DELAYEMBED_OUT", tmp.path()).output().unwrap();
    let b = bin().args(args).env("DELAYEMBED_OUT", tmp.path()).output().unwrap();
    assert_ne!(run_dir(&a), run_dir(&b));
    assert_eq!(read(&a), read(&b));
}

#[test]
fn failing_checks_set_the_exit_code() {
    // a one-dimensional coordinate map cannot give linear prediction-error decay on a circle
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["predict-error", "--system", "rotation:0.6180339887", "--map", "coordinate", "--k", "1", "--n", "5000", "--probes", "16", "--eps-min", "0.003", "--eps-max", "0.05", "--cells", "4"])
        .env("DELAYEMBED_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_profile_falls_back_to_quick() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["accept", "--profile", "nope"]).env("DELAYEMBED_OUT", tmp.path()).env("RUST_LOG", "warn").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown acceptance profile"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 9);
}
