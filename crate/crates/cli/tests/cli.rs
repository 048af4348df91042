use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neurodenote::chess::synth::{generate_pgn, SynthConfig};
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neurodenote"));
    c.env_remove("NEURODENOTE_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, inputs: Value, extra: Value) -> PathBuf {
    let mut cfg = json!({
        "inputs": inputs,
        "output_dir": "out",
        "seeds": {"split": 1, "object_init": 2, "annihilation": 3},
        "object": {"train": {"max_epochs": 2, "batch_size": 64, "rng_seed": 11}},
        "observer": {
            "kinds": ["linear"],
            "train": {"max_epochs": 2, "batch_size": 64, "rng_seed": 21},
            "pool_cap": 300
        },
        "analysis": {"annihilation_repetitions": 5}
    });
    if let (Some(base), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            base.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn ten_game_pgn(dir: &Path) -> (PathBuf, String) {
    let text = generate_pgn(&SynthConfig {
        games: 10,
        seed: 99,
        max_plies: 60,
        temperature: 0.3,
    });
    let path = dir.join("ten.pgn");
    std::fs::write(&path, &text).unwrap();
    (path, text)
}

/// Counts SAN move tokens: header lines, comments, move numbers and results
/// are skipped.
fn count_san_tokens(pgn: &str) -> usize {
    let mut body = String::new();
    let mut depth = 0;
    for line in pgn.lines().filter(|l| !l.trim_start().starts_with('[')) {
        for ch in line.chars() {
            match ch {
                '{' => depth += 1,
                '}' => depth -= 1,
                _ if depth == 0 => body.push(ch),
                _ => {}
            }
        }
        body.push(' ');
    }
    body.split_whitespace()
        .filter(|t| !matches!(*t, "1-0" | "0-1" | "1/2-1/2" | "*"))
        .map(|t| t.trim_start_matches(|c: char| c.is_ascii_digit() || c == '.'))
        .filter(|t| !t.is_empty())
        .count()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/ingest/summary.json")).unwrap()).unwrap()
}

#[test]
fn position_count_matches_san_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let (pgn, text) = ten_game_pgn(dir.path());
    let cfg = write_config(dir.path(), json!({"pgn": [pgn]}), json!({}));
    let out = run(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let s = summary(dir.path());
    assert_eq!(s["games"], 10);
    assert_eq!(s["positions"].as_u64().unwrap() as usize, count_san_tokens(&text));
}

#[test]
fn rerun_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let (pgn, _) = ten_game_pgn(dir.path());
    let cfg = write_config(dir.path(), json!({"pgn": [pgn]}), json!({}));
    let first = run(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert!(!stderr(&first).contains("cache reused"));
    let cache = std::fs::read(dir.path().join("out/positions.ndpos")).unwrap();
    let second = run(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&second), 0);
    assert!(stderr(&second).contains("cache reused"));
    assert_eq!(std::fs::read(dir.path().join("out/positions.ndpos")).unwrap(), cache);
}

#[test]
fn empty_pgn_directory_is_fatal_and_named() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("no-games");
    std::fs::create_dir(&empty).unwrap();
    let cfg = write_config(dir.path(), json!({"pgn": [empty]}), json!({}));
    let out = run(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no-games"), "{}", stderr(&out));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({"pgn": ["absent.pgn"]}), json!({}));
    let out = run(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("absent.pgn"));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(code(&run(&["train-observer"])), 1);
    assert_eq!(code(&run(&["no-such-command"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn failing_stage_exits_three_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let fens = dir.path().join("boards.fen");
    std::fs::write(
        &fens,
        "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1\n4k3/8/8/8/8/8/8/4K2R w K - 0 1\n",
    )
    .unwrap();
    let cfg = write_config(dir.path(), json!({"fen": [fens]}), json!({}));
    let out = run(&["pipeline", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("train-object"));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed_stage"], "train-object");
    let report = run(&["report", dir.path().join("out").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&report.stdout).contains("INCOMPLETE"));
}

#[test]
fn report_on_empty_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"format": "neurodenote-manifest", "version": 1, "config_hash": "x", "seeds": {}, "entries": []}"#,
    )
    .unwrap();
    let out = run(&["report", manifest.to_str().unwrap()]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("no artifacts"));
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (pgn, _) = ten_game_pgn(dir.path());
    let cfg = write_config(dir.path(), json!({"pgn": [pgn]}), json!({}));
    std::fs::create_dir_all(dir.path().join("out")).unwrap();
    std::fs::write(dir.path().join("out/.neurodenote.lock"), "1\n").unwrap();
    let out = run(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("locked"));
}

#[test]
fn pipeline_report_and_tamper_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"synth": {"games": 30, "seed": 3, "max_plies": 80, "temperature": 0.3}}),
        json!({}),
    );
    let out = run(&["pipeline", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let root = dir.path().join("out");
    for f in [
        "metrics.json",
        "object/model.json",
        "heatmaps/material_advantage.svg",
        "proportions/cdf.svg",
    ] {
        assert!(root.join(f).exists(), "{f} missing");
    }

    let clean = run(&["report", root.to_str().unwrap()]);
    assert_eq!(code(&clean), 0);
    let text = String::from_utf8_lossy(&clean.stdout).into_owned();
    assert!(text.contains("object model top-1"));
    assert!(!text.contains("WARNING"));

    std::fs::write(root.join("observers/results.csv"), "edited\n").unwrap();
    let tampered = run(&["report", root.join("manifest.json").to_str().unwrap()]);
    assert_eq!(code(&tampered), 2);
    assert!(
        String::from_utf8_lossy(&tampered.stdout).contains("WARNING: integrity check failed for observers/results.csv")
    );

    std::fs::remove_file(root.join("proportions/cdf.csv")).unwrap();
    let missing = run(&["report", root.to_str().unwrap()]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("MISSING: proportions/cdf.csv"));
}

#[test]
fn output_dir_override() {
    let dir = tempfile::tempdir().unwrap();
    let (pgn, _) = ten_game_pgn(dir.path());
    let cfg = write_config(dir.path(), json!({"pgn": [pgn]}), json!({}));
    let elsewhere = dir.path().join("elsewhere");
    let out = bin()
        .args(["ingest", "-c", cfg.to_str().unwrap()])
        .env("NEURODENOTE_OUTPUT_DIR", &elsewhere)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(elsewhere.join("manifest.json").exists());
    assert!(!dir.path().join("out").exists());
}
