//! End-to-end checks of the command line surface: round trips, exit codes,
//! and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn microlam(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microlam"))
        .args(args)
        .current_dir(dir)
        .env("MICROLAM_THREADS", "2")
        .output()
        .expect("spawn microlam")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn wave_cone_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = microlam(
        &["ops", "wave-cone", "--op", "div", "--mu", "diag(0,2/3,2)"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("member true"), "{text}");
    assert!(text.contains("direction 1.0000000000000000e0"), "{text}");

    let out = microlam(
        &["ops", "wave-cone", "--op", "div", "--mu", "diag(1,1,1)"],
        dir.path(),
    );
    assert!(stdout(&out).contains("member false"));
}

#[test]
fn hull_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = microlam(&["hull", "check", "--F", "S3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("inside true"));

    let out = microlam(&["hull", "check", "--F", "diag(2,2,2)"], dir.path());
    assert_eq!(out.status.code(), Some(3));

    // Unknown flags give usage and exit 2 (clap convention).
    let out = microlam(&["hull", "check", "--nonsense"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn build_then_eval_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = microlam(
        &[
            "build", "laminate", "--a", "A1", "--b", "S1", "--xi", "e1", "--fraction", "1/2",
            "--periods", "4", "--grid", "16", "--eps", "1e-3", "--out", "lam.bin",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let build_text = stdout(&out);
    let build_table: Vec<&str> = build_text.lines().rev().take(2).collect();

    let eval = microlam(&["energy", "eval", "lam.bin", "--eps", "1e-3"], dir.path());
    assert!(eval.status.success());
    let eval_text = stdout(&eval);
    let eval_table: Vec<&str> = eval_text.lines().rev().take(2).collect();
    // The 17-digit rows must agree character for character.
    assert_eq!(build_table, eval_table);

    assert!(dir.path().join("lam.bin").exists());
    assert!(dir.path().join("lam.bin.json").exists());
    assert!(dir.path().join("lam.bin.u").exists());
    assert!(dir.path().join("lam.bin.manifest.json").exists());
}

#[test]
fn sweep_is_byte_deterministic_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "kind": {"Branching": {"theta": 0.3, "lambda": 0.5}},
        "eps": [1e-2, 3.1622776601683795e-3, 1e-3, 3.1622776601683795e-4],
        "seed": 7, "grid_cells": 32, "verify_rows": 0
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let a = microlam(
        &["sweep", "--config", "cfg.json", "--out", "a.csv"],
        dir.path(),
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = microlam(
        &["sweep", "--config", "cfg.json", "--out", "b.csv"],
        dir.path(),
    );
    assert!(b.status.success());
    let csv_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "identical config must give identical bytes");

    let fit = microlam(&["fit", "--model", "algebraic", "a.csv"], dir.path());
    assert!(fit.status.success());
    let text = stdout(&fit);
    let rate_line = text.lines().find(|l| l.starts_with("rate")).unwrap();
    let rate: f64 = rate_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((0.5..0.8).contains(&rate), "rate {rate}");

    // Empty CSV: validation error.
    std::fs::write(dir.path().join("empty.csv"), "eps,params,a,b,c,d,e\n").unwrap();
    let fit = microlam(&["fit", "--model", "algebraic", "empty.csv"], dir.path());
    assert_eq!(fit.status.code(), Some(2));
}

#[test]
fn rigidity_search_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = microlam(&["rigidity", "search", "--grid", "2", "--wells", "t3"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("admissible_fields 3"));

    let out = microlam(&["rigidity", "search", "--grid", "2", "--wells", "pair"], dir.path());
    assert!(stdout(&out).contains("admissible_fields 4"));
}
