use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaugeopt"))
}

#[test]
fn solve_prints_a_json_report() {
    let out = bin().args(["solve", "--n", "16", "--L", "8", "--seed", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "optimal");
    assert!(v["xErr"].as_f64().unwrap() < 1e-2);
    assert_eq!(v["z_shape"][0], 16);
    assert_eq!(v["z"].as_array().unwrap().len(), 2 * 16 * v["z_shape"][1].as_u64().unwrap() as usize);
}

#[test]
fn max_iter_exit_code() {
    let out = bin().args(["solve", "--n", "16", "--L", "4", "--max-iter", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "max-iter");
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(bin().args(["solve", "--n", "16"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["solve", "--n", "16", "--L", "4", "--mode", "fast"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["frobnicate"]).output().unwrap().status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"problems": [{"type": "dense", "n": 4}]}"#).unwrap();
    let out = bin().args(["experiment", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_iteration_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let res = dir.path().join("out.json");
    let out = bin()
        .args(["solve", "--n", "8", "--L", "6", "--seed", "2", "--log-jsonl"])
        .arg(&log)
        .arg("--out")
        .arg(&res)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&res).unwrap()).unwrap();
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len() as u64, report["iterations"].as_u64().unwrap());
    assert!(lines.iter().all(|l| l.get("nDFT").is_some() && l.get("gap").is_some()));
}

#[test]
fn experiment_is_deterministic_across_runs_and_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"problems": [{"type": "phase-retrieval", "n": 16, "L": 6}, {"type": "phase-retrieval", "n": 16, "L": 10}],
            "instances": 3, "modes": ["gauge", "gauge-feas"], "seed_base": 7}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for extra in [None, None, Some("--sequential")] {
        let csv = dir.path().join(format!("run{}.csv", outputs.len()));
        let mut cmd = bin();
        cmd.args(["experiment", "--config"]).arg(&cfg).arg("--out").arg(&csv);
        if let Some(flag) = extra {
            cmd.arg(flag);
        }
        assert!(cmd.output().unwrap().status.success());
        outputs.push(std::fs::read(&csv).unwrap());
        assert!(csv.with_extension("summary.csv").exists());
        assert!(csv.with_extension("json").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn check_subcommand_passes() {
    let out = bin().arg("check").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
