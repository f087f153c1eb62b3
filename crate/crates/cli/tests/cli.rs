//! End-to-end checks of the `dimersim` binary: exit codes, output files,
//! determinism, and the config round trip.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dimersim"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn fixed_points_reports_four_points_and_index_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fixed-points", "--v", "1", "--gamma", "0.75", "--g", "3"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("fixed_points.json"))).unwrap();
    assert_eq!(report["fixed_points"].as_array().unwrap().len(), 4);
    assert_eq!(report["index_sum"], 2);
}

#[test]
fn unknown_flag_and_bad_parameters_exit_two() {
    let out = bin().args(["fixed-points", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["fixed-points", "--v", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // both interaction spellings at once
    let out = bin()
        .args(["fixed-points", "--g", "1", "--c-times-n", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_one() {
    // manifolds need a saddle; region 1 has none
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["manifolds", "--gamma", "0.3", "--g", "0.2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn constant_norm_without_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "evolve-mf", "--gamma", "0", "--g", "0", "--v", "1", "--theta0", "0", "--t-max",
            "10", "--n-steps", "100",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = read(&dir.path().join("evolve_mf.csv"));
    for line in csv.lines().skip(1) {
        let norm: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!((norm - 1.0).abs() < 1e-9, "norm {norm}");
    }
}

#[test]
fn identical_configs_are_byte_identical() {
    let run = |dir: &Path| {
        let out = bin()
            .args([
                "spectrum",
                "--n-particles",
                "6",
                "--c-times-n",
                "0.5",
                "--variant",
                "pt",
                "--sweep",
                "gamma:0:1.2:25",
                "--threads",
                "3",
            ])
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(dir.join("spectrum.csv")).unwrap()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert_eq!(run(d1.path()), run(d2.path()));
}

#[test]
fn dump_config_round_trip_reproduces_the_run() {
    let d1 = tempfile::tempdir().unwrap();
    let cfg_path = d1.path().join("run.json");
    let out = bin()
        .args([
            "evolve-mf", "--gamma", "0.4", "--g", "1.5", "--v", "1", "--theta0", "0.7",
            "--phi0", "0.3", "--t-max", "8", "--n-steps", "160",
        ])
        .arg("--out")
        .arg(d1.path())
        .arg("--dump-config")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let first = std::fs::read(d1.path().join("evolve_mf.csv")).unwrap();

    // replay from the dumped config alone (only --out overridden)
    let d2 = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["evolve-mf"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(d2.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let second = std::fs::read(d2.path().join("evolve_mf.csv")).unwrap();
    assert_eq!(first, second);

    // the config names its command; running another one with it must fail
    let out = bin().args(["manifolds"]).arg("--config").arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_needs_particles() {
    let out = bin().args(["compare", "--gamma", "0.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn halflife_mf_writes_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "halflife-mf", "--gamma", "0.1", "--g", "0", "--grid-n1", "4", "--grid-n2", "4",
            "--t-max", "100",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = read(&dir.path().join("halflife_mf.csv"));
    assert_eq!(csv.lines().count(), 17); // header + 16 cells
    assert!(csv.starts_with("theta,phi,half_life,capped"));
}
