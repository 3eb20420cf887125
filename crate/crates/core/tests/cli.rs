//! The command-line tool end to end, including exit statuses.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mbanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbanet")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"{"m": 3, "C": 16, "C_c": 8, "C_d": 8, "heads": 2, "x_c": 16, "x_s": 64, "window": 2,
    "rfin_count": 3, "dkin_count": 3}"#;

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ckpt, cfg) = (dir.path().join("data"), dir.path().join("ckpt"), dir.path().join("cfg.json"));
    fs::write(&cfg, SMALL).unwrap();

    let out = mbanet(&["gen-data", "--out", s(&data), "--seed", "3", "--train", "3", "--val", "1", "--test", "2", "--size", "32", "--paired"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = mbanet(&[
        "train", "--data", s(&data), "--out", s(&ckpt), "--config", s(&cfg), "--epochs", "2", "--batch", "2", "--lr", "1e-3",
        "--momentum", "0.9", "--weight-decay", "1e-4", "--lr-schedule", "exp", "--seed", "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.join("meta.json").is_file());
    let log = fs::read_to_string(ckpt.join("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2 * 3);

    let report = dir.path().join("report.csv");
    let out = mbanet(&["eval", "--data", s(&data), "--ckpt", s(&ckpt), "--split", "test", "--domain", "B", "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("class,domain,n,dice_mean,dice_std\nall,B,2,"), "{csv}");
    let again = mbanet(&["eval", "--data", s(&data), "--ckpt", s(&ckpt), "--split", "test", "--domain", "B", "--report", s(&report)]);
    assert_eq!(again.stdout, out.stdout);
    assert_eq!(fs::read_to_string(&report).unwrap(), csv);

    let mask = dir.path().join("mask.pgm");
    let image = data.join("images/s00000_A.pgm");
    let out = mbanet(&["predict", "--ckpt", s(&ckpt), "--image", s(&image), "--out", s(&mask)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let pred = mbanet::data::pgm::read(&mask).unwrap();
    assert_eq!(pred.shape(), [32, 32]);
    assert!(pred.data().iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn gradcheck_and_ablate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"C": 8, "C_c": 8, "C_d": 8, "heads": 2, "x_c": 8, "x_s": 32, "window": 1}"#).unwrap();
    let out = mbanet(&["gradcheck", "--config", s(&cfg), "--eps", "1e-5", "--tol", "1e-4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("100.00% within"));

    let data = dir.path().join("data");
    let res = dir.path().join("ablation");
    mbanet(&["gen-data", "--out", s(&data), "--train", "2", "--val", "1", "--test", "0", "--size", "32"]);
    let out = mbanet(&[
        "ablate", "--data", s(&data), "--rfin", "0,3", "--dkin", "1,3", "--out", s(&res), "--config", s(&cfg), "--m", "3",
        "--epochs", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(res.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 + 1);
    assert!(fs::read_to_string(res.join("ablation.txt")).unwrap().contains("<- default"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mbanet(&["--help"])), 0);
    assert_eq!(code(&mbanet(&["--version"])), 0);
    assert_eq!(code(&mbanet(&[])), 1);
    assert_eq!(code(&mbanet(&["train", "--data", "x"])), 1);
    assert_eq!(code(&mbanet(&["eval", "--data", "x", "--ckpt", "y", "--report", "z", "--domain", "C"])), 1);

    let cycle = dir.path().join("cycle.json");
    fs::write(&cycle, r#"{"m": 2, "dkin_count": 3}"#).unwrap();
    assert_eq!(code(&mbanet(&["gradcheck", "--config", s(&cycle)])), 3);

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"m": 3, "depth": 4}"#).unwrap();
    assert_eq!(code(&mbanet(&["gradcheck", "--config", s(&unknown)])), 1);

    let missing = dir.path().join("nothing");
    let report = dir.path().join("r.csv");
    assert_eq!(code(&mbanet(&["eval", "--data", s(&missing), "--ckpt", s(&missing), "--report", s(&report)])), 2);
    assert_eq!(code(&mbanet(&["gen-data", "--out", s(&missing), "--size", "30"])), 2);
}
