//! Runs the `cfpn` binary end to end.

use std::path::PathBuf;
use std::process::{Command, Output};

fn cfpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfpn"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("cfpn-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

const TINY: &[&str] = &[
    "--n",
    "32",
    "--n-c",
    "8",
    "--tau-c",
    "4",
    "--tau-p",
    "4",
    "-L",
    "3",
    "-K",
    "2",
    "--trials",
    "2",
    "--realizations",
    "2",
    "--beta",
    "uniform:1",
    "--noise-power",
    "0.01",
];

#[test]
fn complexity_reports_the_full_scale_counts() {
    let out = cfpn(&["complexity", "--full"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("row,"));
    let row = csv
        .lines()
        .find(|l| l.starts_with("distributed-joint-channel-cpe-lmmse"))
        .unwrap();
    assert!(row.contains("9200000"), "{row}");
}

#[test]
fn invalid_configuration_exits_with_code_two() {
    let out = cfpn(&["simulate", "--tau-p", "1000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));

    let dir = scratch("badtoml");
    let f = dir.join("bad.toml");
    std::fs::write(&f, "[scenario]\nnum_apps = 4\n").unwrap();
    assert_eq!(
        cfpn(&["pn-stats", "--config", f.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn simulate_is_reproducible() {
    let dir = scratch("simulate");
    let run = |name: &str| {
        let path = dir.join(name);
        let mut args = vec![
            "simulate",
            "--values",
            "0,1e-16",
            "--estimators",
            "unaware,proposed-distributed",
        ];
        args.extend_from_slice(TINY);
        args.extend_from_slice(&["-o", path.to_str().unwrap()]);
        let out = cfpn(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(dir.join("a.json").exists() && dir.join("a.detail.csv").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn pn_stats_prints_json() {
    let out = cfpn(&[
        "pn-stats",
        "--n",
        "16",
        "--tau-c",
        "4",
        "--tau-p",
        "4",
        "--n-c",
        "4",
        "--eval-subcarrier",
        "1",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn mse_writes_error_columns() {
    let dir = scratch("mse");
    let path = dir.join("mse.csv");
    let mut args = vec![
        "mse",
        "--estimators",
        "proposed-distributed,proposed-centralized-lmmse",
        "--per-iteration",
    ];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["-o", path.to_str().unwrap()]);
    let out = cfpn(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    for col in [
        "eff_nmse",
        "channel_nmse",
        "cpe_mse",
        "residual",
        "iteration",
    ] {
        assert!(header.contains(&col), "missing {col}");
    }
    assert!(text.lines().count() > 2);
    std::fs::remove_dir_all(dir).unwrap();
}
