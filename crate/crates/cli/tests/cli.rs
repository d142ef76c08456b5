//! End-to-end runs of the `crc` binary.

use std::path::Path;
use std::process::{Command, Output};

fn crc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crc")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_report_and_boundary_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let runs = dir.path().join("runs");
    std::fs::write(
        &cfg,
        "n = 100\narms = 2\nhidden_widths = 8\nbias = true\nmax_steps = 30\nstep_size = 0.02\n\
         query_size = 2\nnum_acquisitions = 1\nseeds = 0, 1\nstrategy = crc\n",
    )
    .unwrap();
    let o = crc(&["run", s(&cfg), "--output-dir", s(&runs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(runs.join("crc_seed1.json").exists());

    let report = dir.path().join("report.csv");
    let o = crc(&["report", s(&runs), "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 3);

    let grid = dir.path().join("grid.csv");
    let ck = runs.join("crc_seed0_model.json");
    let o = crc(&["boundary", s(&ck), "--resolution", "4", "--bounds", "-2,2,-1,1", "--out", s(&grid)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&grid).unwrap();
    assert!(text.starts_with("x,y,class,max_softmax\n"));
    assert_eq!(text.lines().count(), 17);
}

#[test]
fn gen_data_writes_train_and_test_files() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    let o = crc(&["gen-data", "--n", "40", "--arms", "2", "--out", s(&train), "--test-out", s(&test)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read_to_string(&train).unwrap();
    let b = std::fs::read_to_string(&test).unwrap();
    assert!(a.starts_with("x0,x1,label\n"));
    assert_eq!(a.lines().count(), 41);
    assert_ne!(a, b);
}

#[test]
fn verify_passes() {
    let o = crc(&["verify"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS ")).count(), 8);
}

#[test]
fn failures_print_one_categorised_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let o = crc(&["run", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[config]: "), "{err}");

    let o = crc(&["report", s(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[io]: "), "{}", stderr(&o));

    let o = crc(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]: "));
}
