use std::fs;
use std::path::Path;
use std::process::Command;

use rdl_lab::cli::commands;

mod common;
use common::quick;

fn rdl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rdl"))
}

fn run_in(dir: &Path, args: &[&str]) -> i32 {
    let out = rdl().current_dir(dir).args(args).output().unwrap();
    out.status.code().unwrap()
}

#[test]
fn zero_drift_exp_moment_is_exactly_one() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run_in(
        tmp.path(),
        &["exp-moment", "--drift", "zero", "--alpha", "0.1", "--trials", "1000", "--seed", "7", "--out", "o"],
    );
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(v["estimate"].as_f64(), Some(1.0));
}

#[test]
fn every_subcommand_replays_bitwise_and_carries_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    for def in commands() {
        let out = format!("out-{}", def.name);
        let mut args = vec![def.name, "--out", out.as_str(), "--seed", "3"];
        args.extend(quick(def.name));
        assert_eq!(run_in(tmp.path(), &args), 0, "{}", def.name);
        let first = fs::read(tmp.path().join(&out).join("results.csv")).unwrap();
        let header = String::from_utf8(first.clone()).unwrap();
        assert!(header.starts_with("seed,trial_lo,trial_hi,level,"), "{}", def.name);
        let manifest = format!("{out}/manifest.json");
        assert_eq!(run_in(tmp.path(), &["replay", manifest.as_str(), "--out", "again"]), 0, "{}", def.name);
        let second = fs::read(tmp.path().join("again/results.csv")).unwrap();
        assert_eq!(first, second, "{}", def.name);
        fs::remove_dir_all(tmp.path().join("again")).unwrap();
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    for (t, o) in [("1", "a"), ("3", "b")] {
        let code = run_in(
            tmp.path(),
            &["tail-fit", "--trials", "500", "--level", "8", "--lambda-min", "0", "--threads", t, "--out", o],
        );
        assert_eq!(code, 0);
    }
    let a = fs::read(tmp.path().join("a/results.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(run_in(d, &["exp-moment", "--no-such-flag", "1"]), 64);
    assert_eq!(run_in(d, &["no-such-command"]), 64);
    assert_eq!(run_in(d, &["covariation", "--drift", "checkerboard", "--trials", "2"]), 2);
    assert_eq!(run_in(d, &["exp-moment", "--drift", "nonsense"]), 2);
    assert_eq!(run_in(d, &["exp-moment", "--trials", "10", "--assert", "estimate<0.5", "--out", "x"]), 3);
    assert_eq!(run_in(d, &["exp-moment", "--trials", "10", "--assert", "estimate>=1", "--out", "x"]), 0);
    assert_eq!(run_in(d, &["exp-moment", "--trials", "10", "--assert", "missing>=1", "--out", "x"]), 2);
    fs::write(d.join("file"), "x").unwrap();
    assert_eq!(run_in(d, &["exp-moment", "--trials", "10", "--out", "file/sub"]), 74);
    assert_eq!(run_in(d, &["exp-moment", "--help"]), 0);
}

#[test]
fn parameter_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("cfg"), "alpha = 0.2\ntrials = 10\nlevel = 6\n").unwrap();
    let read = |o: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(d.join(o).join("manifest.json")).unwrap()).unwrap()
    };
    let out = rdl()
        .current_dir(d)
        .env("RDL_ALPHA", "0.3")
        .env("RDL_LEVEL", "7")
        .args(["exp-moment", "--config", "cfg", "--level", "5", "--out", "p"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let m = read("p");
    assert_eq!(m["params"]["level"], "5");
    assert_eq!(m["params"]["alpha"], "0.3");
    assert_eq!(m["params"]["trials"], "10");
    assert_eq!(m["params"]["drift"], "zero");
    fs::write(d.join("bad"), "nope = 1\n").unwrap();
    assert_eq!(run_in(d, &["exp-moment", "--config", "bad"]), 64);
    assert_eq!(run_in(d, &["exp-moment", "--config", "missing-file"]), 74);
}

#[test]
fn help_names_the_statement_each_subcommand_exercises() {
    for def in commands() {
        let out = rdl().args([def.name, "--help"]).output().unwrap();
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("Exercises:"), "{}", def.name);
        assert!(text.contains(def.exercises.split_whitespace().next().unwrap()), "{}", def.name);
        assert!(text.contains("--seed") && text.contains("--out") && text.contains("--threads"), "{}", def.name);
    }
}

#[test]
fn tampered_outputs_fail_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(run_in(d, &["occupation", "--trials", "20", "--level", "6", "--out", "o"]), 0);
    let mpath = d.join("o/manifest.json");
    let text = fs::read_to_string(&mpath).unwrap().replace("\"trials\": \"20\"", "\"trials\": \"21\"");
    fs::write(&mpath, text).unwrap();
    assert_eq!(run_in(d, &["replay", "o/manifest.json", "--out", "r"]), 3);
}
