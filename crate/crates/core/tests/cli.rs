use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cliff-geom");

fn run(dir: &Path, args: &str) -> Output {
    Command::new(BIN).current_dir(dir).args(args.split_whitespace()).output().unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn gen_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), "gen --seed 7 --n 10 --out d1").status.success());
    assert!(run(tmp.path(), "gen --seed 7 --n 10 --out d2").status.success());
    let (a, b) = (files(&tmp.path().join("d1")), files(&tmp.path().join("d2")));
    assert_eq!(a.len(), 11);
    assert!(a.contains_key("manifest.json"));
    assert_eq!(a, b);
}

#[test]
fn ablate_writes_three_rows_with_mean_and_std() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), "gen --seed 3 --n 60 --focal 1000 --out d").status.success());
    let out = run(tmp.path(), "--json ablate --dataset d --seeds 1,2,3 --holdout 0.15 --epochs 1 --pairs 0 --out a");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["command"], "ablate");
    let csv = std::fs::read_to_string(tmp.path().join("a/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "config,mpjpe_mean,mpjpe_std,pa_mpjpe_mean,pa_mpjpe_std,yaw_mean,yaw_std");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("neither,") && lines[2].starts_with("cs-only,") && lines[3].starts_with("ci+cs,"));
}

#[test]
fn focal_sweep_csv_has_factor_and_mpjpe_columns() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), "gen --seed 5 --n 2 --lateral-extent 0.3 --out d").status.success());
    assert!(run(tmp.path(), "focal-sweep --dataset d --seed 1 --factors 0.5,1 --out f").status.success());
    let csv = std::fs::read_to_string(tmp.path().join("f/focal_sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("series,factor,mpjpe_mm"));
    assert_eq!(csv.lines().count(), 3);
    assert!(tmp.path().join("f/focal_sweep.svg").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), "gen --n 3 --out d").status.code(), Some(2));
    assert_eq!(run(tmp.path(), "gen --seed 1 --n 3 --out d --unknown").status.code(), Some(2));
    assert_eq!(run(tmp.path(), "eval --pred nowhere --gt nowhere --out e").status.code(), Some(1));
    assert_eq!(run(tmp.path(), "smooth --seed 1 --fps 0 --out s").status.code(), Some(3));
    assert_eq!(run(tmp.path(), "--help").status.code(), Some(0));
}

#[test]
fn json_flag_keeps_stdout_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let quiet = run(tmp.path(), "smooth --seed 2 --frames 30 --out s1");
    assert!(quiet.stdout.is_empty());
    let loud = run(tmp.path(), "--json smooth --seed 2 --frames 30 --out s2");
    let v: serde_json::Value = serde_json::from_slice(&loud.stdout).unwrap();
    assert!(v["accel_after"].as_f64().unwrap() < v["accel_before"].as_f64().unwrap());
}
