use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rfcd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfcd"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn classify_without_degradations_is_s1() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfcd(&["classify"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "S1");
}

#[test]
fn classify_reads_sensor_degradations() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[sensor1]\npitch = 4\n[sensor2]\nband_groups = [[0, 1], [2, 3], [4, 5]]\n",
    )
    .unwrap();
    let o = rfcd(&["classify", "--config", "c.toml"], dir.path());
    assert_eq!(stdout(&o).trim(), "S4");
    fs::write(dir.path().join("c.toml"), "[sensor2]\npitch = 2\n").unwrap();
    let o = rfcd(&["classify", "--config", "c.toml"], dir.path());
    assert!(stdout(&o).starts_with("S3 (sensor 1 plays"));
}

#[test]
fn missing_y2_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfcd(&["simulate", "--out", "sim"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    fs::remove_file(dir.path().join("sim/y2.json")).unwrap();
    let o = rfcd(
        &["detect", "--config", "sim/run.toml", "--out", "det"],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("y2.json"), "{}", stderr(&o));
}

#[test]
fn bad_config_fails_with_usage_hint() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[sensor1]\npich = 2\n").unwrap();
    let o = rfcd(&["detect", "--config", "c.toml"], dir.path());
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("pich") && stderr(&o).contains("--help"),
        "{}",
        stderr(&o)
    );
    let o = rfcd(&["detect", "--config", "absent.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent.toml"));
    let o = rfcd(&["frobnicate"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn default_pipeline_reports_auc() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--out", "sim"][..],
        &["detect", "--config", "sim/run.toml", "--out", "det"],
        &["evaluate", "--config", "sim/run.toml", "--out", "det"],
    ] {
        let o = rfcd(args, dir.path());
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("det/evaluation.json")).unwrap())
            .unwrap();
    assert!(report["auc"].as_f64().unwrap() > 0.9);
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("det/report.json")).unwrap())
            .unwrap();
    assert_eq!(run["scenario"], "S1");
    assert!(run["objective_trace"].as_array().unwrap().len() >= 2);
}

#[test]
fn coarse_baseline_is_scored_on_the_truth_grid() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[simulation]\nwidth = 32\nheight = 32\n[sensor1]\npitch = 2\n[sensor2]\nband_groups = [[0, 1], [2, 3], [4, 5]]\n",
    )
    .unwrap();
    for args in [
        &["simulate", "--config", "c.toml", "--out", "sim"][..],
        &["baseline", "--config", "sim/run.toml", "--out", "wc"],
        &["evaluate", "--config", "sim/run.toml", "--out", "wc"],
    ] {
        let o = rfcd(args, dir.path());
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("wc/evaluation.json")).unwrap())
            .unwrap();
    assert_eq!(report["block"], 2);
    assert_eq!(report["width"], 32);
    let total: u64 = [
        "true_positives",
        "false_positives",
        "true_negatives",
        "false_negatives",
    ]
    .iter()
    .map(|k| report[k].as_u64().unwrap())
    .sum();
    assert_eq!(total, 32 * 32);
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfcd(&["simulate", "--out", "sim", "--seed", "3"], dir.path());
    assert!(o.status.success());
    let o = rfcd(
        &["detect", "--config", "sim/run.toml", "--out", "sim/a"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    fs::copy(
        dir.path().join("sim/a/effective.toml"),
        dir.path().join("sim/effective.toml"),
    )
    .unwrap();
    let o = rfcd(
        &["detect", "--config", "sim/effective.toml", "--out", "sim/b"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "dx.bin",
        "x1.bin",
        "map.pgm",
        "energy.pgm",
        "report.json",
        "effective.toml",
    ] {
        assert_eq!(
            fs::read(dir.path().join("sim/a").join(f)).unwrap(),
            fs::read(dir.path().join("sim/b").join(f)).unwrap(),
            "{f}"
        );
    }
}
