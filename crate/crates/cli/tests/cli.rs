use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specthresh"));
    c.env_remove("SPECTHRESH_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_line(out: &Output) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error kind="), "stderr: {err}");
    err
}

#[test]
fn simulate_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for f in [&a, &b] {
        ok(&[
            "simulate",
            "--theta",
            "2",
            "--sigma",
            "2",
            "--n",
            "1000",
            "--seed",
            "7",
            "--out",
            p(f),
        ]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1002);
    assert_eq!(text.lines().next(), Some("x0"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn simulate_deterministic_chain() {
    let out = ok(&[
        "simulate",
        "--sigma",
        "0",
        "--theta",
        "2",
        "--n",
        "2",
        "--init",
        "fixed:1.0",
    ]);
    let rows: Vec<f64> = out.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    let expected = [1.0, (-2.0f64).exp(), (-4.0f64).exp()];
    assert_eq!(rows.len(), 3);
    for (r, e) in rows.iter().zip(expected) {
        assert!((r - e).abs() < 1e-15);
    }
}

#[test]
fn estimate_reports_rank_and_matches_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    ok(&["simulate", "--n", "1000", "--seed", "11", "--out", p(&traj)]);

    let raw = dir.path().join("raw");
    ok(&["estimate", p(&traj), "--m", "4", "--alpha", "0", "--out", p(&raw)]);
    let huge = dir.path().join("huge");
    ok(&["estimate", p(&traj), "--m", "4", "--alpha", "1000", "--out", p(&huge)]);
    assert_eq!(json(&huge.join("report.json"))["rank"], 0);
    assert_eq!(json(&raw.join("report.json"))["rank"], 4);

    let spec = dir.path().join("spec.json");
    ok(&["spectrum", p(&traj), "--m", "4", "--format", "json", "--out", p(&spec)]);
    assert_eq!(
        json(&spec)["singular_values"],
        json(&raw.join("report.json"))["singular_values"]
    );

    let op = dir.path().join("op");
    ok(&[
        "estimate",
        p(&traj),
        "--m",
        "4",
        "--alpha",
        "0.2",
        "--tau",
        "2",
        "--out",
        p(&op),
    ]);
    let report = json(&op.join("report.json"));
    assert!(report["rank"].as_u64().unwrap() <= 3);
    assert_eq!(report["kept_count"], report["rank"]);
    assert!(op.join("p_tilde.csv").exists());
    assert!(op.join("p_tilde_tau2.csv").exists());
}

#[test]
fn json_trajectories_match_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let js = dir.path().join("t.json");
    ok(&["simulate", "--n", "300", "--seed", "2", "--out", p(&csv)]);
    ok(&[
        "simulate",
        "--n",
        "300",
        "--seed",
        "2",
        "--format",
        "json",
        "--out",
        p(&js),
    ]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["estimate", p(&csv), "--m", "3", "--alpha", "0.1", "--out", p(&a)]);
    ok(&["estimate", p(&js), "--m", "3", "--alpha", "0.1", "--out", p(&b)]);
    assert_eq!(
        fs::read(a.join("p_tilde.csv")).unwrap(),
        fs::read(b.join("p_tilde.csv")).unwrap()
    );
}

#[test]
fn experiment_single_cell_in_band() {
    let out = ok(&[
        "experiment",
        "--n",
        "1000",
        "--m",
        "3",
        "--alpha",
        "0",
        "--reps",
        "100",
        "--seed",
        "3",
    ]);
    let row = out.lines().nth(1).unwrap();
    let mean: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((0.46..=0.58).contains(&mean), "mean loss {mean}");
}

#[test]
fn experiment_is_reproducible_and_thread_independent() {
    let args = [
        "experiment",
        "--n",
        "400,800",
        "--m",
        "3,5",
        "--alpha",
        "0,0.1",
        "--reps",
        "6",
        "--seed",
        "21",
    ];
    let once = ok(&args);
    assert_eq!(once, ok(&args));
    let one = bin().args(args).args(["--threads", "1"]).output().unwrap();
    let three = bin().args(args).env("SPECTHRESH_THREADS", "3").output().unwrap();
    assert_eq!(String::from_utf8(one.stdout).unwrap(), once);
    assert_eq!(String::from_utf8(three.stdout).unwrap(), once);

    let single = [
        "experiment",
        "--n",
        "500",
        "--m",
        "4",
        "--alpha",
        "0.2",
        "--reps",
        "1",
        "--seed",
        "9",
    ];
    assert_eq!(ok(&single), ok(&single));
}

#[test]
fn shipped_config_has_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml");
    ok(&["experiment", "--config", p(&cfg), "--reps", "3", "--out", p(dir.path())]);
    let table = fs::read_to_string(dir.path().join("loss_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 16 * 3);
    let js = json(&dir.path().join("loss_table.json"));
    assert_eq!(js["cells"].as_array().unwrap().len(), 48);
}

#[test]
fn figure_data_emits_four_matching_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["figure-data", "--resolution", "24", "--out", p(&a)]);
    ok(&["figure-data", "--resolution", "24", "--seed", "5", "--out", p(&b)]);
    let names: Vec<String> = ["true", "projected", "nonthresholded", "thresholded"]
        .iter()
        .map(|l| format!("grid_{l}.csv"))
        .collect();
    let mut entries: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    entries.sort();
    let mut expected = names.clone();
    expected.sort();
    assert_eq!(entries, expected);
    for n in &names {
        let text = fs::read_to_string(a.join(n)).unwrap();
        assert_eq!(text.lines().count(), 25);
        assert!(text.lines().all(|l| l.split(',').count() == 25));
    }
    assert_eq!(
        fs::read(a.join("grid_true.csv")).unwrap(),
        fs::read(b.join("grid_true.csv")).unwrap()
    );
    assert_ne!(
        fs::read(a.join("grid_thresholded.csv")).unwrap(),
        fs::read(b.join("grid_thresholded.csv")).unwrap()
    );
}

fn oracle_spectrum(extra: &[&str]) -> Value {
    let mut args = vec!["spectrum", "--oracle", "--format", "json"];
    args.extend_from_slice(extra);
    serde_json::from_str(&ok(&args)).unwrap()
}

#[test]
fn spectrum_oracle_slope_and_convergence() {
    let base = oracle_spectrum(&["--m", "16", "--theta", "2", "--sigma", "2"]);
    let slope = base["slope"].as_f64().unwrap();
    assert!((-2.3..=-1.7).contains(&slope), "slope {slope}");
    let fine = oracle_spectrum(&["--m", "16", "--quad-nodes", "1024"]);
    assert!((fine["slope"].as_f64().unwrap() - slope).abs() < 1e-3);
}

#[test]
fn spectrum_uniform_oracle_is_rank_one() {
    let s = oracle_spectrum(&["--m", "5", "--kernel", "uniform"]);
    let values: Vec<f64> = s["singular_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((values[0] - 1.0).abs() < 1e-12);
    assert!(values[1..].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["simulate", "--n", "10", "--theta", "-1"],
        vec!["simulate", "--bogus"],
        vec!["estimate", "x.csv", "--m", "3"],
        vec!["experiment", "--n", "100"],
        vec!["experiment", "--n", "100", "--m", "40", "--alpha", "0", "--reps", "1"],
        vec!["spectrum", "--oracle", "--m", "4", "--fit", "9"],
        vec!["simulate", "--n", "10", "--threads", "0"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(error_line(&out).contains("kind=usage code=2"));
    }
    let out = bin()
        .args(["simulate", "--n", "3"])
        .env("SPECTHRESH_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "estimate",
        p(&dir.path().join("missing.csv")),
        "--m",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out).contains("kind=input code=3"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x0\n0.1\nnot-a-number\n").unwrap();
    let out = run(&["estimate", p(&bad), "--m", "3", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    error_line(&out);

    let cfg = dir.path().join("broken.toml");
    fs::write(&cfg, "theta = \"two\"\n").unwrap();
    let out = run(&["experiment", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    error_line(&out);
}

#[test]
fn help_exits_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["spectrum", "--help"]).status.success());
}
