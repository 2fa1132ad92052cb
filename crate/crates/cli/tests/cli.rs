use std::fs;
use std::process::Command;

fn regdfo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regdfo"))
}

#[test]
fn solve_prints_trajectory_and_summary() {
    let out = regdfo()
        .args(["solve", "--problem", "rosenbrock", "--reg", "l1:1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("termination:"));
    assert!(text.contains("phi_best:"));
    assert!(text.lines().count() > 3);
}

#[test]
fn bench_then_profiles_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = regdfo()
        .args(["bench", "--problems", "beale,rosenbrock", "--seeds", "2", "--noise", "add:1e-2", "--tau", "1e-3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let jsonl = fs::read_to_string(out.join("records.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2 * 2 * 2);
    for r in &records {
        let n = r["n"].as_u64().unwrap() as usize;
        assert!(r["phi"].as_array().unwrap().len() <= 100 * (n + 1));
    }
    let csv = fs::read_to_string(out.join("np.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("solver,problem,seed,tau,Np"));
    assert_eq!(csv.lines().count(), 1 + records.len());

    let plots = dir.path().join("plots");
    let status = regdfo()
        .args(["profiles", "--tau", "1e-3,1e-5"])
        .arg("--records")
        .arg(out.join("records.jsonl"))
        .arg("--out")
        .arg(&plots)
        .status()
        .unwrap();
    assert!(status.success());
    let svgs = fs::read_dir(&plots)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 4);
}

#[test]
fn bench_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let status = regdfo()
            .args(["bench", "--problems", "beale", "--seeds", "2", "--noise", "mult:1e-2"])
            .args(extra)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(out.join("records.jsonl")).unwrap()
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_eq!(a, run("c", &["--sequential"]));
}

#[test]
fn config_file_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(&cfg, "# tighter radius\ndelta_max = 10\ngamma0=0.1\n").unwrap();
    let status = regdfo()
        .args(["solve", "--problem", "beale", "--solver", "dfolssr"])
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());

    fs::write(&cfg, "no_such_key=1\n").unwrap();
    let out = regdfo()
        .args(["solve", "--problem", "beale"])
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn bad_inputs_are_rejected() {
    for args in [
        vec!["solve", "--problem", "nope"],
        vec!["solve", "--problem", "beale", "--reg", "l2:1"],
        vec!["solve", "--problem", "beale", "--noise", "mult:x"],
        vec!["bench", "--solver", "nomad"],
    ] {
        let out = regdfo().args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
    }
}

#[test]
fn empty_records_write_no_plots() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("empty.jsonl");
    fs::write(&records, "").unwrap();
    let plots = dir.path().join("plots");
    let out = regdfo()
        .arg("profiles")
        .arg("--records")
        .arg(&records)
        .arg("--out")
        .arg(&plots)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(!plots.exists());
}

#[test]
fn strict_mode_fails_on_failed_cells() {
    // beale starts at (1, 1), outside the unit ball, so every cell fails.
    let dir = tempfile::tempdir().unwrap();
    let run = |strict: bool| {
        let mut cmd = regdfo();
        cmd.args(["bench", "--problems", "beale", "--reg", "ball:1", "--solver", "dfolsr"]);
        if strict {
            cmd.arg("--strict");
        }
        cmd.arg("--out").arg(dir.path()).output().unwrap()
    };
    let lenient = run(false);
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("cell failed"));
    let jsonl = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert!(record["error"].is_string());
    assert!(!run(true).status.success());
}
