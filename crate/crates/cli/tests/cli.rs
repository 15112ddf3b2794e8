use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crowdship(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdship"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_the_commands() {
    let out = crowdship(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["generate", "simulate", "experiment", "tune"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let out = crowdship(&["simulate", "--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--policy",
        "--lambda",
        "--eta",
        "--gamma",
        "--phi",
        "--chi",
        "--budget-ms",
        "--avg-tt",
        "--no-strategic-wait",
    ] {
        assert!(text.contains(flag), "{flag} missing from simulate help");
    }
}

#[test]
fn generate_then_simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("day.inst");
    let out = crowdship(&[
        "generate",
        "--class",
        "nm",
        "--level",
        "low",
        "--seed",
        "3",
        "--out",
        path(&inst),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("day.inst.manifest.json").exists());
    let original = fs::read(&inst).unwrap();

    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let run_dir = dir.path().join(name);
        let out = crowdship(&[
            "simulate",
            "--instance",
            path(&inst),
            "--policy",
            "drace",
            "--out",
            path(&run_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8(out.stdout).unwrap().contains("total_cost"));
        runs.push((
            fs::read(run_dir.join("kpi.json")).unwrap(),
            fs::read(run_dir.join("events.log")).unwrap(),
        ));
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], "simulate");
        assert_eq!(manifest["resolved"]["params"]["cost"]["lambda"], 0.05);
    }
    assert_eq!(runs[0], runs[1]);
    assert!(!runs[0].1.is_empty());
    assert_eq!(fs::read(&inst).unwrap(), original, "the instance file was modified");

    // A generated-on-the-fly run of the same seed gives the same day.
    let direct = dir.path().join("direct");
    let out = crowdship(&[
        "simulate",
        "--class",
        "nm",
        "--level",
        "low",
        "--seed",
        "3",
        "--out",
        path(&direct),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(direct.join("kpi.json")).unwrap(), runs[0].0);
}

#[test]
fn manifests_replay_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = crowdship(&[
        "experiment",
        "--class",
        "uo",
        "--level",
        "low",
        "--reps",
        "2",
        "--seed",
        "5",
        "--lambda",
        "0.1",
        "--out",
        path(&first),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("drace vs myopic"));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(first.join("manifest.json")).unwrap()).unwrap();
    let second = dir.path().join("second");
    let mut args: Vec<String> = manifest["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap().to_string())
        .collect();
    let at = args.iter().position(|a| a == "--out").unwrap();
    args[at + 1] = path(&second).to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_crowdship"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success());
    for file in ["results.csv", "summary.csv"] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(second.join(file)).unwrap(),
            "{file} differs"
        );
    }

    let summary = crowdship(&[
        "summarize",
        "--results",
        path(&first.join("results.csv")),
        "--compare",
        "drace:myopic",
    ]);
    assert!(summary.status.success());
    assert_eq!(summary.stdout, fs::read(first.join("summary.csv")).unwrap());
}

#[test]
fn tune_reports_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("tune");
    let out = crowdship(&[
        "tune",
        "--param",
        "eta",
        "--grid",
        "0.2,0",
        "--class",
        "uo",
        "--level",
        "low",
        "--reps",
        "1",
        "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("tune.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "eta,mean_total_cost");
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("0.2,"));
    assert!(String::from_utf8(out.stdout).unwrap().contains("<- best"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Usage errors.
    assert_eq!(crowdship(&["simulate", "--policy", "greedy"]).status.code(), Some(2));
    assert_eq!(crowdship(&["simulate", "--eta", "1.5"]).status.code(), Some(2));
    assert_eq!(
        crowdship(&["experiment", "--compare", "drace,drace"]).status.code(),
        Some(2)
    );
    assert_eq!(
        crowdship(&["tune", "--param", "rho", "--grid", "1"]).status.code(),
        Some(2)
    );

    // A malformed instance is a parse error.
    let bad = dir.path().join("bad.inst");
    fs::write(&bad, "version 1\nclass nowhere\n").unwrap();
    let out = crowdship(&["simulate", "--instance", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "diagnostic spans lines: {err}");
    assert!(err.contains("bad.inst"));

    // Missing input is an I/O error.
    let missing = dir.path().join("missing.inst");
    assert_eq!(
        crowdship(&["simulate", "--instance", path(&missing)]).status.code(),
        Some(3)
    );

    // Outputs never replace inputs.
    let params = dir.path().join("manifest.json");
    fs::write(&params, "lambda = 0.1\n").unwrap();
    let out = crowdship(&["simulate", "--config", path(&params), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_to_string(&params).unwrap(), "lambda = 0.1\n");
}
