use std::process::{Command, Output};

fn phasediff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasediff"))
        .args(args)
        .env_remove("PHASEDIFF_WORKERS")
        .output()
        .expect("binary runs")
}

fn body(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

fn column(out: &Output, name: &str) -> Vec<String> {
    let text = body(out);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn qfi_single_point() {
    let out = phasediff(&["qfi", "--n", "2", "--beta", "1", "--delta", "0"]);
    assert!(out.status.success());
    let h: f64 = column(&out, "H")[0].parse().unwrap();
    assert!((h - 48.0).abs() < 0.048, "H = {h}");
    assert_eq!(column(&out, "error"), vec![String::new()]);
}

#[test]
fn empty_grid_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("job.toml");
    std::fs::write(&path, "[qfi]\nn = []\n").unwrap();
    let out = phasediff(&["qfi", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_config_key_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("job.toml");
    std::fs::write(&path, "sede = 1\n").unwrap();
    assert_eq!(phasediff(&["qfi", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn out_of_domain_flag_exits_with_usage_code() {
    assert_eq!(phasediff(&["qfi", "--beta", "1.5"]).status.code(), Some(2));
}

#[test]
fn failing_rows_exit_with_one() {
    let out = phasediff(&["qfi", "--n", "2,50", "--cutoff-limit", "150", "--verify-cutoff", "false"]);
    assert_eq!(out.status.code(), Some(1));
    let errors = column(&out, "error");
    assert!(errors[0].is_empty());
    assert!(!errors[1].is_empty());
}

#[test]
fn reruns_are_bytewise_identical() {
    let args = ["crb-mc", "--samples", "500", "--batches", "6", "--seed", "11", "--workers", "3"];
    let a = phasediff(&args);
    let b = phasediff(&args);
    assert!(a.status.success());
    assert_eq!(body(&a), body(&b));
    let c = phasediff(&["crb-mc", "--samples", "500", "--batches", "6", "--seed", "11", "--workers", "1"]);
    assert_eq!(body(&a), body(&c));
}

#[test]
fn json_output_carries_provenance() {
    let out = phasediff(&["qfi", "--n", "1", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["columns"][3], "H");
    assert_eq!(doc["provenance"]["command"], "qfi");
    assert_eq!(doc["provenance"]["config"]["qfi"]["n"][0], 1.0);
    assert!(doc["rows"][0][6].as_u64().unwrap() > 0);
}

#[test]
fn output_file_and_config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phasediff(&["--print-config", "homodyne", "--n", "2", "--beta", "1", "--delta", "0"]);
    assert!(cfg.status.success());
    let cfg_path = dir.path().join("job.toml");
    std::fs::write(&cfg_path, &cfg.stdout).unwrap();
    let out_path = dir.path().join("table.csv");
    let out = phasediff(&[
        "homodyne",
        "--config",
        cfg_path.to_str().unwrap(),
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let row = text.lines().last().unwrap();
    let ratio: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert!((ratio - 1.0).abs() < 0.01, "F/H = {ratio}");
}

#[test]
fn fit_reads_a_sweep_table() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let out = phasediff(&[
        "sweep",
        "--n",
        "2,4,6",
        "--delta",
        "0.02,0.05,0.1,0.2",
        "--verify-cutoff",
        "false",
        "--output",
        sweep.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let fit = phasediff(&["fit", "--input", sweep.to_str().unwrap()]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    assert_eq!(column(&fit, "n_records"), vec!["12".to_string()]);
    let rms: f64 = column(&fit, "residual_rms")[0].parse().unwrap();
    assert!(rms.is_finite() && rms >= 0.0);
}
