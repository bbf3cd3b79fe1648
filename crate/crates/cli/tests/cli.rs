use std::path::Path;
use std::process::{Command, Output};

use fmlab::sweep::SweepConfig;

fn fmlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmlab"))
        .args(args)
        .current_dir(cwd)
        .env("FMLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fmlab(&["criterion", "--kind", "bogus", "--lambda", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(fmlab(&["criterion", "--kind", "thm1"], dir.path()).status.code(), Some(2));
    assert_eq!(fmlab(&["criterion", "--kind", "thm1", "--lambda", "1", "--s", "1.5"], dir.path()).status.code(), Some(2));
    assert_eq!(fmlab(&["--threads", "0", "verify"], dir.path()).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    let example = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sweep_example.toml")).unwrap();
    std::fs::write(&bad, example.replace("lambdas = [5.0,", "lambdas = [-5.0,")).unwrap();
    let out = fmlab(&["sweep", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda must be positive"));
}

#[test]
fn example_config_is_valid() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sweep_example.toml");
    SweepConfig::load(Path::new(path)).unwrap().validate().unwrap();
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = fmlab(&["verify", "--level", "fast", "--out", "report.json"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(dir.path().join("report.json").exists());
    let tampered = fmlab(&["verify", "--residual-tol", "1e-20"], dir.path());
    assert_eq!(tampered.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&tampered.stderr).contains("resolvent_identities"));
}

#[test]
fn single_site_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmlab(
        &["criterion", "--kind", "single_site", "--dim", "1", "--lambda", "16", "--s", "0.5", "--starts", "4"],
        dir.path(),
    );
    assert!(out.status.success());
    let r = json(&out);
    // 4·C/λ with C = 2
    assert!((r["lhs"].as_f64().unwrap() - 0.5).abs() < 1e-6, "{r}");
    assert_eq!(r["verdict"], "pass");
}

#[test]
fn one_cell_sweep_matches_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
schema_version = 1
master_seed = 11
output_dir = "out"
lambdas = [6.0]
energies = [0.25]

[ensemble]
dim = 1
hopping = { kind = { kind = "nearest_neighbor" } }
disorder = { kind = "uniform", a = -1.0, b = 1.0 }

[criterion]
kind = "thm1"
l = 2
samples = 200
starts = 4
"#;
    std::fs::write(dir.path().join("c.toml"), config).unwrap();
    let sweep = fmlab(&["sweep", "--config", "c.toml"], dir.path());
    assert!(sweep.status.success(), "{}", String::from_utf8_lossy(&sweep.stderr));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();

    let single = fmlab(
        &[
            "criterion", "--kind", "thm1", "--lambda", "6", "--energy", "0.25", "--L", "2", "--samples", "200",
            "--starts", "4", "--seed", "11",
        ],
        dir.path(),
    );
    let r = json(&single);
    assert_eq!(row[3].parse::<f64>().unwrap(), r["lhs"].as_f64().unwrap());
    assert_eq!(row[6], r["verdict"].as_str().unwrap());
}

#[test]
fn moments_and_dynamical_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = fmlab(
        &["moments", "--lambda", "10", "--half-width", "6", "--samples", "100", "--out", "m.csv"],
        dir.path(),
    );
    assert!(m.status.success());
    assert!(json(&m)["fit"]["mu"].as_f64().unwrap() > 0.0);
    let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(text.lines().count(), 8);

    let d = fmlab(
        &["dynamical", "--lambda", "10", "--half-width", "6", "--samples", "20", "--window=-1:1", "--t-steps", "5", "--out", "d.csv"],
        dir.path(),
    );
    assert!(d.status.success());
    assert_eq!(json(&d)["profile"]["violations"], 0);
    let header = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(header.starts_with("distance,mean_gridmax,stderr_gridmax,mean_tv,stderr_tv,n"));
}
